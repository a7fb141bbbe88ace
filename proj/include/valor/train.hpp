#pragma once

#include "valor/evalkit.hpp"
#include "valor/model.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

namespace valor {

struct TrainConfig {
    ModelConfig model;
    objective::LossConfig loss;
    objective::ScheduleConfig schedule{.t0 = 0}; // t0 <= 0 means "steps in 10 epochs"
    objective::AdamWConfig adamw;
    objective::AugmentConfig augment;
    int batch = 16;
    int epochs = 50;
    double grad_clip = 1.0;
    int patience = 15;
    std::uint64_t seed = 42;
};

struct RoutingStats {
    std::vector<double> mean_gates;         // over all evaluated rows
    std::vector<double> selection_fraction; // hard top-1 share per expert
    double load_balance = 0;                // sum_k (mean_gate_k - 1/K)^2
    double mean_entropy = 0;
};

struct EvalResult {
    std::array<evalkit::TaskReport, 2> tasks;          // per-pair argmax scoring
    std::optional<std::array<evalkit::MultiLabelReport, 2>> multilabel;
    objective::LossBreakdown loss;                     // row-weighted batch means
    validate::ValidationReport validation;
    RoutingStats routing;
};

// Eval mode: no router noise, no dropout, no augmentation. Throws
// std::invalid_argument on an empty corpus.
EvalResult evaluate(ParamStore<double>& ps, const TrainConfig& cfg, const datagen::Corpus& corpus);

struct TrainResult {
    ParamStore<double> best;
    ParamStore<double> last;
    int best_epoch = 0;
    long steps = 0;
    bool early_stopped = false;
    std::vector<nlohmann::json> history; // one row per epoch
};

long steps_per_epoch(std::size_t items, int batch);

// Resolves t0 <= 0 to the step count of 10 epochs.
objective::ScheduleConfig resolved_schedule(const TrainConfig& cfg, std::size_t train_items);

TrainResult train(const datagen::Corpus& train_set, const datagen::Corpus& val_set, const TrainConfig& cfg);

void write_history(const std::filesystem::path& path, const std::vector<nlohmann::json>& history);

nlohmann::json to_json(const objective::LossBreakdown& b);
nlohmann::json to_json(const validate::ValidationReport& r);
nlohmann::json to_json(const RoutingStats& r);
nlohmann::json to_json(const EvalResult& r);

} // namespace valor
