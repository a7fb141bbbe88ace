#pragma once

#include "valor/params.hpp"
#include "valor/tensor.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace valor::evalkit {

// Entry (g, p) counts gold g predicted p. Throws std::out_of_range on a label
// outside [0, C).
Eigen::MatrixXi confusion_matrix(std::span<const int> preds, std::span<const int> golds, int classes);

struct TaskReport {
    int count = 0;
    double accuracy = 0;
    double macro_f1 = 0;
    std::vector<double> precision, recall, f1; // per class, 0/0 -> 0
    Eigen::MatrixXi confusion;
};

// Throws std::invalid_argument on an empty input.
TaskReport task_report(std::span<const int> preds, std::span<const int> golds, int classes);
TaskReport report_from_confusion(const Eigen::MatrixXi& confusion);

// Multi-label scoring: exact-set accuracy and per-label F1 over 0/1 rows.
struct MultiLabelReport {
    int count = 0;
    double subset_accuracy = 0;
    std::vector<double> f1;
    double macro_f1 = 0;
};

MultiLabelReport multilabel_report(const Eigen::MatrixXi& preds, const Eigen::MatrixXi& golds);

// Pairwise cosine of flattened matrices. Throws std::invalid_argument on a
// shape mismatch and UndefinedMetric on a zero-norm matrix.
Eigen::MatrixXd expert_similarity(const std::vector<Eigen::MatrixXd>& weights);

enum class ExpertMatrix { Alpha, WIn, WOut };

// Accepts "alpha", "w_in", "w_out".
ExpertMatrix parse_expert_matrix(const std::string& name);
const char* expert_matrix_name(ExpertMatrix m);

// W_out is the two task heads side by side: [W_aspect | W_severity].
template <typename S>
std::vector<Eigen::MatrixXd> expert_weights(const ParamStore<S>& ps, int experts, ExpertMatrix which)
{
    std::vector<Eigen::MatrixXd> out;
    for (int k = 0; k < experts; ++k) {
        const std::string n = "expert" + std::to_string(k);
        switch (which) {
        case ExpertMatrix::Alpha:
            out.push_back(ps.at(n + ".alpha").value.template cast<double>());
            break;
        case ExpertMatrix::WIn:
            out.push_back(ps.at(n + ".in.w").value.template cast<double>());
            break;
        case ExpertMatrix::WOut: {
            const auto& a = ps.at(n + ".out_aspect.w").value;
            const auto& s = ps.at(n + ".out_severity.w").value;
            Eigen::MatrixXd w(a.rows(), a.cols() + s.cols());
            w << a.template cast<double>(), s.template cast<double>();
            out.push_back(std::move(w));
            break;
        }
        }
    }
    return out;
}

nlohmann::json to_json(const TaskReport& r, const std::vector<std::string>& class_names);
nlohmann::json to_json(const MultiLabelReport& r);

// Header row of class names, then one row per gold class.
std::string confusion_csv(const Eigen::MatrixXi& m, const std::vector<std::string>& class_names);
std::string similarity_csv(const Eigen::MatrixXd& m);

} // namespace valor::evalkit
