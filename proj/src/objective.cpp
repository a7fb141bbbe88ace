#include "valor/objective.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace valor::objective {

LossBreakdown total_loss(const LossParts& p, const LossConfig& cfg)
{
    const std::pair<const char*, double> named[] = {
        {"L_aspect", p.aspect},     {"L_severity", p.severity},   {"L_lb", p.load_balance},
        {"L_val", p.validation},    {"L_sas", p.sas},             {"L_alignment", p.alignment},
        {"L_dominance", p.dominance}, {"L_complementarity", p.complementarity}};
    for (const auto& [name, v] : named)
        if (!std::isfinite(v))
            throw NonFiniteError(name);

    LossBreakdown b;
    b.parts = p;
    b.weights = {1.0,          1.0,          cfg.lambda_lb, cfg.lambda_val,
                 cfg.lambda_sas, cfg.lambda_r, cfg.lambda_s,  cfg.lambda_u};
    b.total = p.aspect + p.severity + cfg.lambda_lb * p.load_balance + cfg.lambda_val * p.validation +
              cfg.lambda_sas * p.sas + cfg.lambda_r * p.alignment + cfg.lambda_s * p.dominance +
              cfg.lambda_u * p.complementarity;
    return b;
}

std::vector<double> smoothed_target(int gold, int classes, double eps)
{
    if (gold < 0 || gold >= classes)
        throw std::out_of_range("smoothed_target: gold class out of range");
    std::vector<double> t(static_cast<std::size_t>(classes), eps / classes);
    t[static_cast<std::size_t>(gold)] += 1.0 - eps;
    return t;
}

double soft_cross_entropy(std::span<const double> logits, std::span<const double> target)
{
    if (logits.size() != target.size() || logits.empty())
        throw std::invalid_argument("soft_cross_entropy: size mismatch");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double l : logits)
        z += std::exp(l - mx);
    const double lse = mx + std::log(z);
    double loss = 0;
    for (std::size_t i = 0; i < logits.size(); ++i)
        loss -= target[i] * (logits[i] - lse);
    return loss;
}

double label_smoothed_ce(std::span<const double> logits, int gold, double eps)
{
    const auto t = smoothed_target(gold, static_cast<int>(logits.size()), eps);
    return soft_cross_entropy(logits, t);
}

double sas_margin_loss(std::span<const double> s, double mu)
{
    if (s.empty())
        throw std::invalid_argument("sas_margin_loss: empty batch");
    double sum = 0;
    for (double v : s)
        sum += std::max(0.0, mu - v);
    return sum / static_cast<double>(s.size());
}

Regularizers metric_regularizers(double r_avg, double dominance, double u_avg, const LossConfig& cfg)
{
    return {std::max(0.0, r_avg - cfg.tau_r), std::max(0.0, cfg.tau_s - dominance), std::max(0.0, cfg.tau_u - u_avg)};
}

double lr_schedule(long step, const ScheduleConfig& cfg)
{
    if (step < 0)
        throw std::invalid_argument("lr_schedule: negative step");
    if (cfg.t0 <= 0 || cfg.t_mult < 1.0)
        throw std::invalid_argument("lr_schedule: need t0 > 0 and t_mult >= 1");
    if (step < cfg.warmup)
        return cfg.lr_max * static_cast<double>(step) / static_cast<double>(cfg.warmup);
    double t = static_cast<double>(step - cfg.warmup);
    double period = static_cast<double>(cfg.t0);
    while (t >= period) {
        t -= period;
        period *= cfg.t_mult;
    }
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * t / period)) / 2.0;
}

// --- augmentation ------------------------------------------------------------

datagen::Image mix_images(const datagen::Image& a, const datagen::Image& b, double lam)
{
    if (a.data.size() != b.data.size())
        throw std::invalid_argument("mix_images: shape mismatch");
    datagen::Image out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = static_cast<float>(lam * a.data[i] + (1.0 - lam) * b.data[i]);
    return out;
}

Targets mix_targets(const Targets& a, const Targets& b, double lam)
{
    Targets out = a;
    for (int t = 0; t < 2; ++t)
        for (std::size_t c = 0; c < out[t].size(); ++c)
            out[t][c] = lam * a[t][c] + (1.0 - lam) * b[t][c];
    return out;
}

void paste_box(datagen::Image& dst, const datagen::Image& src, const Box& box)
{
    for (int c = 0; c < dst.channels; ++c)
        for (int y = box.y; y < box.y + box.h; ++y)
            for (int x = box.x; x < box.x + box.w; ++x)
                dst.at(c, y, x) = src.at(c, y, x);
}

namespace {

double log_uniform(double lo, double hi, Rng& rng)
{
    return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * uniform01(rng));
}

int uniform_int(int lo, int hi, Rng& rng)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

} // namespace

Box sample_cut_box(int height, int width, double area_fraction, const AugmentConfig& cfg, Rng& rng)
{
    const double ratio = log_uniform(cfg.aspect_min, cfg.aspect_max, rng);
    const double area = std::clamp(area_fraction, 0.0, 1.0) * height * width;
    Box b;
    b.h = std::min(height, static_cast<int>(std::lround(std::sqrt(area * ratio))));
    b.w = std::min(width, static_cast<int>(std::lround(std::sqrt(area / ratio))));
    b.y = uniform_int(0, height - b.h, rng);
    b.x = uniform_int(0, width - b.w, rng);
    return b;
}

std::optional<Box> sample_erase_box(int height, int width, const AugmentConfig& cfg, Rng& rng)
{
    const double total = static_cast<double>(height) * width;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double frac = cfg.erase_area_min + (cfg.erase_area_max - cfg.erase_area_min) * uniform01(rng);
        const double ratio = log_uniform(cfg.aspect_min, cfg.aspect_max, rng);
        Box b;
        b.h = static_cast<int>(std::lround(std::sqrt(frac * total * ratio)));
        b.w = static_cast<int>(std::lround(std::sqrt(frac * total / ratio)));
        if (b.h < 1 || b.w < 1 || b.h > height || b.w > width)
            continue;
        const double realized = b.area() / total;
        if (realized < cfg.erase_area_min || realized > cfg.erase_area_max)
            continue;
        b.y = uniform_int(0, height - b.h, rng);
        b.x = uniform_int(0, width - b.w, rng);
        return b;
    }
    return std::nullopt;
}

void augment(std::vector<datagen::Image>& images, std::vector<Targets>& targets, const AugmentConfig& cfg, Rng& rng)
{
    if (images.size() != targets.size())
        throw std::invalid_argument("augment: batch size mismatch");
    if (!cfg.enabled || images.empty())
        return;
    const std::vector<datagen::Image> src_images = images;
    const std::vector<Targets> src_targets = targets;
    const int n = static_cast<int>(images.size());
    for (int i = 0; i < n; ++i) {
        auto& img = images[i];
        if (n > 1) {
            int j = uniform_int(0, n - 2, rng);
            if (j >= i)
                ++j;
            if (uniform01(rng) < cfg.cutmix_prob) {
                const double lam = beta_sample(rng, cfg.cutmix_alpha, cfg.cutmix_alpha);
                const Box box = sample_cut_box(img.height, img.width, 1.0 - lam, cfg, rng);
                paste_box(img, src_images[j], box);
                const double cut = static_cast<double>(box.area()) / (img.height * img.width);
                targets[i] = mix_targets(src_targets[i], src_targets[j], 1.0 - cut);
            } else {
                const double lam = beta_sample(rng, cfg.mixup_alpha, cfg.mixup_alpha);
                img = mix_images(src_images[i], src_images[j], lam);
                targets[i] = mix_targets(src_targets[i], src_targets[j], lam);
            }
        }
        if (uniform01(rng) < cfg.erase_prob) {
            if (auto box = sample_erase_box(img.height, img.width, cfg, rng))
                for (int c = 0; c < img.channels; ++c)
                    for (int y = box->y; y < box->y + box->h; ++y)
                        for (int x = box->x; x < box->x + box->w; ++x)
                            img.at(c, y, x) = static_cast<float>(uniform01(rng));
        }
    }
}

} // namespace valor::objective
