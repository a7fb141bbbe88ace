#pragma once

#include "valor/autodiff.hpp"
#include "valor/datagen.hpp"
#include "valor/params.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace valor::objective {

using ad::Tape;
using ad::Var;

enum class LossMode { PerPairCE, MultiLabelBCE };

struct LossConfig {
    double label_smoothing = 0.15;
    double sas_margin = 0.3;  // mu
    double tau_r = 0.3;
    double tau_s = 0.5;
    double tau_u = 1.5;
    double lambda_lb = 0.05;
    double lambda_val = 1.0;
    double lambda_sas = 0.1;
    double lambda_r = 0.1;
    double lambda_s = 0.1;    // dominance weight
    double lambda_u = 0.1;
    LossMode mode = LossMode::PerPairCE;
};

struct LossParts {
    double aspect = 0;
    double severity = 0;
    double load_balance = 0;
    double validation = 0;
    double sas = 0;
    double alignment = 0;
    double dominance = 0;
    double complementarity = 0;
};

struct LossBreakdown {
    LossParts parts;
    LossParts weights; // aspect and severity weights are 1
    double total = 0;
};

// Weighted sum of the eight parts; throws NonFiniteError naming the first
// non-finite component.
LossBreakdown total_loss(const LossParts& parts, const LossConfig& cfg);

// Target with 1 - eps + eps/C on gold and eps/C elsewhere.
std::vector<double> smoothed_target(int gold, int classes, double eps);

double soft_cross_entropy(std::span<const double> logits, std::span<const double> target);
double label_smoothed_ce(std::span<const double> logits, int gold, double eps);

// Batch-mean hinge max(0, mu - s_b).
double sas_margin_loss(std::span<const double> s, double mu);

struct Regularizers {
    double alignment = 0;       // max(0, R_avg - tau_R)
    double dominance = 0;       // max(0, tau_S - dominance)
    double complementarity = 0; // max(0, tau_U - U_avg)
};

Regularizers metric_regularizers(double r_avg, double dominance, double u_avg, const LossConfig& cfg);

// --- tape versions -------------------------------------------------------------

// Mean over rows of -sum_c target * log_softmax(logits).
template <typename S>
Var<S> soft_cross_entropy(Var<S> logits, const Matrix<S>& targets)
{
    Var<S> ll = ad::cmul_const(ad::log_softmax_rows(logits), targets);
    return ad::scale(ad::sum_all(ll), S(-1) / static_cast<S>(logits.rows()));
}

// Mean over rows and classes of the logistic loss against 0/1 targets.
template <typename S>
Var<S> binary_cross_entropy(Var<S> logits, const Matrix<S>& targets)
{
    Var<S> l = ad::sub(ad::softplus(logits), ad::cmul_const(logits, targets));
    return ad::mean_all(l);
}

template <typename S>
Var<S> sas_margin_loss(Var<S> s, S mu)
{
    return ad::mean_all(ad::relu(ad::shift(ad::scale(s, S(-1)), mu)));
}

// --- learning-rate schedule and optimizer ---------------------------------------

struct ScheduleConfig {
    double lr_max = 5e-4;
    double lr_min = 1e-6;
    long warmup = 500;
    long t0 = 40;
    double t_mult = 2.0;
};

// Linear warmup 0 -> lr_max over `warmup` steps, then cosine annealing with
// warm restarts whose period grows by t_mult after each restart.
double lr_schedule(long step, const ScheduleConfig& cfg);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

template <typename S>
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    void step(ParamStore<S>& ps, double lr)
    {
        if (m_.empty()) {
            for (const auto& p : ps.all()) {
                m_.push_back(Matrix<S>::Zero(p.value.rows(), p.value.cols()));
                v_.push_back(Matrix<S>::Zero(p.value.rows(), p.value.cols()));
            }
        }
        ++t_;
        const S b1 = S(cfg_.beta1), b2 = S(cfg_.beta2);
        const S c1 = S(1) - std::pow(b1, S(t_));
        const S c2 = S(1) - std::pow(b2, S(t_));
        std::size_t i = 0;
        for (auto& p : ps.all()) {
            auto& m = m_[i];
            auto& v = v_[i];
            ++i;
            if (!p.trainable)
                continue;
            m = b1 * m + (S(1) - b1) * p.grad;
            v = b2 * v + (S(1) - b2) * p.grad.cwiseProduct(p.grad);
            p.value -= S(lr) * (S(cfg_.weight_decay) * p.value +
                                ((m / c1).array() / ((v / c2).array().sqrt() + S(cfg_.eps))).matrix());
        }
    }

    long steps() const { return t_; }

private:
    AdamWConfig cfg_;
    std::vector<Matrix<S>> m_, v_;
    long t_ = 0;
};

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename S>
double clip_grad_norm(ParamStore<S>& ps, double max_norm)
{
    double sq = 0;
    for (const auto& p : ps.all())
        if (p.trainable)
            sq += static_cast<double>(p.grad.squaredNorm());
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const S f = S(max_norm / norm);
        for (auto& p : ps.all())
            p.grad *= f;
    }
    return norm;
}

// --- augmentation ------------------------------------------------------------

struct AugmentConfig {
    bool enabled = true;
    double mixup_alpha = 0.2;
    double cutmix_alpha = 1.0; // cut area ~ Beta(a, a)
    double cutmix_prob = 0.5;
    double erase_prob = 0.3;
    double erase_area_min = 0.02;
    double erase_area_max = 0.4;
    double aspect_min = 0.3;
    double aspect_max = 3.3;
};

struct Box {
    int y = 0, x = 0, h = 0, w = 0;
    int area() const { return h * w; }
};

// Soft targets for both tasks of one instance.
using Targets = std::array<std::vector<double>, 2>;

// lam * a + (1 - lam) * b, pixelwise.
datagen::Image mix_images(const datagen::Image& a, const datagen::Image& b, double lam);
Targets mix_targets(const Targets& a, const Targets& b, double lam);

// Copies box from src into dst.
void paste_box(datagen::Image& dst, const datagen::Image& src, const Box& box);

// CutMix rectangle covering roughly `area_fraction` of the image with aspect
// ratio log-uniform in [aspect_min, aspect_max].
Box sample_cut_box(int height, int width, double area_fraction, const AugmentConfig& cfg, Rng& rng);

// Random-erasing rectangle whose realized area fraction lies in
// [erase_area_min, erase_area_max]; nullopt after 10 failed attempts.
std::optional<Box> sample_erase_box(int height, int width, const AugmentConfig& cfg, Rng& rng);

// Per sample: CutMix with probability cutmix_prob, MixUp otherwise (partner
// drawn from the batch, lambda ~ Beta(alpha, alpha) with the mode's alpha);
// then random erasing
// with probability erase_prob, filled with uniform noise. Partners read the
// un-augmented batch.
void augment(std::vector<datagen::Image>& images, std::vector<Targets>& targets, const AugmentConfig& cfg, Rng& rng);

} // namespace valor::objective
