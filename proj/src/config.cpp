#include "valor/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace valor {

datagen::GenSpec RunConfig::gen_spec() const
{
    datagen::GenSpec g = gen;
    g.seed = seed;
    return g;
}

TrainConfig RunConfig::train_config() const
{
    TrainConfig t = train;
    t.seed = seed;
    return t;
}

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text)
{
    T v{};
    const std::string t = trim(text);
    const auto* first = t.data();
    const auto* last = t.data() + t.size();
    std::from_chars_result r;
    if constexpr (std::is_floating_point_v<T>)
        r = std::from_chars(first, last, v, std::chars_format::general);
    else
        r = std::from_chars(first, last, v);
    if (t.empty() || r.ec != std::errc() || r.ptr != last)
        throw ConfigError("bad value for " + key + ": '" + text + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    if (t == "true" || t == "1")
        return true;
    if (t == "false" || t == "0")
        return false;
    throw ConfigError("bad boolean for " + key + ": '" + text + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text)
{
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(parse_number<T>(key, item));
    return out;
}

template <typename T>
std::string join(const T& values)
{
    std::string s;
    for (const auto& v : values) {
        if (!s.empty())
            s += ',';
        if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>)
            s += fmt(v);
        else
            s += std::to_string(v);
    }
    return s;
}

// Numeric key bound to one field through an accessor returning a reference.
template <typename T, typename Access>
ConfigKey num(std::string key, std::string source, std::string help, Access access)
{
    ConfigKey k{std::move(key), std::move(source), std::move(help), nullptr, nullptr};
    const std::string name = k.key;
    k.set = [name, access](RunConfig& c, const std::string& v) { access(c) = parse_number<T>(name, v); };
    k.get = [access](const RunConfig& c) {
        const T v = access(const_cast<RunConfig&>(c));
        if constexpr (std::is_floating_point_v<T>)
            return fmt(v);
        else
            return std::to_string(v);
    };
    return k;
}

template <typename Access>
ConfigKey flag(std::string key, std::string source, std::string help, Access access)
{
    ConfigKey k{std::move(key), std::move(source), std::move(help), nullptr, nullptr};
    const std::string name = k.key;
    k.set = [name, access](RunConfig& c, const std::string& v) { access(c) = parse_bool(name, v); };
    k.get = [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); };
    return k;
}

template <std::size_t N, typename T, typename Access>
ConfigKey list(std::string key, std::string source, std::string help, Access access)
{
    ConfigKey k{std::move(key), std::move(source), std::move(help), nullptr, nullptr};
    const std::string name = k.key;
    k.set = [name, access](RunConfig& c, const std::string& v) {
        const auto xs = parse_list<T>(name, v);
        if (xs.size() != N)
            throw ConfigError(name + " expects " + std::to_string(N) + " comma-separated values");
        std::copy(xs.begin(), xs.end(), access(c).begin());
    };
    k.get = [access](const RunConfig& c) { return join(access(const_cast<RunConfig&>(c))); };
    return k;
}

const std::string kPub = "published";
const std::string kImpl = "implementation default";

std::vector<ConfigKey> build_keys()
{
    std::vector<ConfigKey> k;
    auto add = [&](ConfigKey key) { k.push_back(std::move(key)); };

    add(num<std::uint64_t>("run.seed", kPub + ": fixed random seed 42", "master seed for every random substream",
                           [](RunConfig& c) -> std::uint64_t& { return c.seed; }));

    add(num<int>("data.total", kPub + ": 2004 conversations", "number of generated conversations",
                 [](RunConfig& c) -> int& { return c.gen.total; }));
    add(list<6, int>("data.aspect_histogram", kPub + ": Software 1662, Quality 117, ...",
                     "pair counts per aspect (Software,Quality,Hardware,Service,Price,Packaging)",
                     [](RunConfig& c) -> std::array<int, 6>& { return c.gen.aspect_histogram; }));
    add(list<4, int>("data.severity_histogram", kPub + ": Blame 799, ...",
                     "pair counts per severity (No Explicit Reproach,Disapproval,Blame,Accusation)",
                     [](RunConfig& c) -> std::array<int, 4>& { return c.gen.severity_histogram; }));
    add(num<double>("data.multi_label_rate", kImpl, "fraction of samples given two or more pairs",
                    [](RunConfig& c) -> double& { return c.gen.multi_label_rate; }));
    add(num<double>("data.image_rate", kPub + ": 4478 images / 2004 conversations, clamped to 1",
                    "probability that a sample carries an image",
                    [](RunConfig& c) -> double& { return c.gen.image_rate; }));
    add(num<int>("data.vocab_size", kImpl, "synthetic vocabulary size (sync with model.vocab)",
                 [](RunConfig& c) -> int& { return c.gen.vocab_size; }));
    add(num<int>("data.image_side", kImpl, "generated image side in pixels (sync with model.image_side)",
                 [](RunConfig& c) -> int& { return c.gen.image_side; }));
    add(num<int>("data.min_utterances", kPub + ": 2 to 10 utterances", "minimum utterances per conversation",
                 [](RunConfig& c) -> int& { return c.gen.min_utterances; }));
    add(num<int>("data.max_utterances", kPub + ": 2 to 10 utterances", "maximum utterances per conversation",
                 [](RunConfig& c) -> int& { return c.gen.max_utterances; }));
    add(list<3, double>("split.ratios", kPub + ": 70/10/20 split", "train,val,test fractions (sum 1)",
                        [](RunConfig& c) -> std::array<double, 3>& { return c.split; }));

    {
        ConfigKey d{"model.d", kPub + ": d = 768 (full-scale preset)", "embedding width shared by every module", nullptr,
                    nullptr};
        d.set = [](RunConfig& c, const std::string& v) {
            const int x = parse_number<int>("model.d", v);
            auto& m = c.train.model;
            m.encoder.d = m.fusion.d = m.sas.d = m.experts.d = m.validation.d = x;
        };
        d.get = [](const RunConfig& c) { return std::to_string(c.train.model.encoder.d); };
        add(d);
    }
    add(num<int>("model.layers", kPub + ": 12 layers (full-scale preset)", "encoder depth",
                 [](RunConfig& c) -> int& { return c.train.model.encoder.layers; }));
    add(num<int>("model.heads", kPub + ": 12 heads (full-scale preset)", "encoder attention heads",
                 [](RunConfig& c) -> int& { return c.train.model.encoder.heads; }));
    add(num<int>("model.max_tokens", kPub + ": L = 512 (full-scale preset)", "token sequence length incl. CLS",
                 [](RunConfig& c) -> int& { return c.train.model.encoder.max_tokens; }));
    add(num<int>("model.vocab", kPub + ": V = 30522 (full-scale preset)", "token vocabulary size",
                 [](RunConfig& c) -> int& { return c.train.model.encoder.vocab; }));
    add(num<int>("model.patch", kPub + ": patch 16 (full-scale preset)", "image patch side",
                 [](RunConfig& c) -> int& { return c.train.model.encoder.patch; }));
    add(num<int>("model.image_side", kPub + ": 224 x 224 (full-scale preset)", "encoder input image side",
                 [](RunConfig& c) -> int& { return c.train.model.encoder.image_side; }));
    add(num<int>("model.ffn_mult", kImpl, "encoder FFN width multiplier",
                 [](RunConfig& c) -> int& { return c.train.model.encoder.ffn_mult; }));
    add(num<int>("fusion.heads", kPub + ": H = 8", "cross-modal attention heads",
                 [](RunConfig& c) -> int& { return c.train.model.fusion.heads; }));
    add(num<int>("fusion.depth", kImpl, "number of fusion blocks",
                 [](RunConfig& c) -> int& { return c.train.model.fusion.depth; }));
    add(num<int>("fusion.ffn_mult", kImpl, "fusion FFN width multiplier",
                 [](RunConfig& c) -> int& { return c.train.model.fusion.ffn_mult; }));
    add(num<int>("sas.shared_dim", kPub + ": shared 512-dimensional space (full-scale preset)", "SAS projection width",
                 [](RunConfig& c) -> int& { return c.train.model.sas.shared_dim; }));
    add(num<int>("experts.count", kPub + ": K = 4", "number of CoT experts",
                 [](RunConfig& c) -> int& { return c.train.model.experts.experts; }));
    add(num<int>("experts.d_t", kPub + ": d_t = 4096 (full-scale preset)", "expert hidden width",
                 [](RunConfig& c) -> int& { return c.train.model.experts.d_t; }));
    add(num<int>("experts.stub_blocks", kImpl, "residual blocks in the reasoning stub",
                 [](RunConfig& c) -> int& { return c.train.model.experts.stub_blocks; }));
    add(num<int>("experts.ffn_mult", kImpl, "stub FFN width multiplier",
                 [](RunConfig& c) -> int& { return c.train.model.experts.ffn_mult; }));
    add(num<int>("experts.reasoning_vocab", kImpl, "token-head vocabulary of the trace decoder",
                 [](RunConfig& c) -> int& { return c.train.model.experts.reasoning_vocab; }));
    add(num<int>("experts.trace_tokens", kPub + ": L_max = 24 reasoning tokens", "trace length",
                 [](RunConfig& c) -> int& { return c.train.model.experts.trace_tokens; }));
    add(num<int>("experts.route_top_k", kPub + ": hard top-1", "experts mixed per sample (gate-weighted when > 1)",
                 [](RunConfig& c) -> int& { return c.train.model.experts.route_top_k; }));
    add(num<double>("experts.router_noise", kPub + ": noise sd 0.05", "router logit noise in train mode",
                    [](RunConfig& c) -> double& { return c.train.model.experts.router_noise; }));
    add(num<double>("experts.router_init_sd", kImpl, "router weight init sd",
                    [](RunConfig& c) -> double& { return c.train.model.experts.router_init_sd; }));
    add(num<int>("validation.experts", kPub + ": L_v = 2", "number of validation experts",
                 [](RunConfig& c) -> int& { return c.train.model.validation.experts; }));
    add(num<int>("validation.layers", kPub + ": 32 layers (full-scale preset)", "layers per validation stack",
                 [](RunConfig& c) -> int& { return c.train.model.validation.layers; }));
    add(num<int>("validation.trainable_layers", kPub + ": only the last 2 layers updated",
                 "stack layers receiving updates, counted from the top",
                 [](RunConfig& c) -> int& { return c.train.model.validation.trainable_layers; }));
    add(num<int>("validation.d_t", kPub + ": d_t = 4096 (full-scale preset)", "validation stack width",
                 [](RunConfig& c) -> int& { return c.train.model.validation.d_t; }));
    add(num<int>("validation.ffn_mult", kImpl, "validation FFN width multiplier",
                 [](RunConfig& c) -> int& { return c.train.model.validation.ffn_mult; }));
    add(num<int>("validation.out_dim", kImpl, "W_v,out width",
                 [](RunConfig& c) -> int& { return c.train.model.validation.out_dim; }));
    add(num<int>("validation.head_hidden", kImpl, "hidden width of the per-task ReLU heads",
                 [](RunConfig& c) -> int& { return c.train.model.validation.head_hidden; }));
    add(num<int>("meta.hidden1", kPub + ": hidden sizes (768, 384, C) (full-scale preset)", "meta-fusion first hidden width",
                 [](RunConfig& c) -> int& { return c.train.model.meta.hidden1; }));
    add(num<int>("meta.hidden2", kPub + ": hidden sizes (768, 384, C) (full-scale preset)",
                 "meta-fusion second hidden width", [](RunConfig& c) -> int& { return c.train.model.meta.hidden2; }));
    add(num<double>("meta.dropout", kPub + ": dropout 0.1 (appendix) / 0.5 (main text)", "meta-fusion dropout",
                    [](RunConfig& c) -> double& { return c.train.model.meta.dropout; }));
    add(num<double>("meta.lambda_s", kPub + ": lambda_s = 0.1", "SAS logit shift weight",
                    [](RunConfig& c) -> double& { return c.train.model.meta.lambda_s; }));

    add(num<double>("sampler.temperature", kPub + ": tau = 0.5", "trace sampling temperature",
                    [](RunConfig& c) -> double& { return c.sampler.temperature; }));
    add(num<int>("sampler.top_k", kPub + ": top-k = 30", "trace top-k (clamped to vocabulary)",
                 [](RunConfig& c) -> int& { return c.sampler.top_k; }));
    add(num<double>("sampler.top_p", kPub + ": top-p = 0.9", "trace nucleus mass",
                    [](RunConfig& c) -> double& { return c.sampler.top_p; }));

    add(num<double>("loss.label_smoothing", kPub + ": eps_ls = 0.15", "label smoothing",
                    [](RunConfig& c) -> double& { return c.train.loss.label_smoothing; }));
    add(num<double>("loss.sas_margin", kPub + ": mu = 0.3", "SAS hinge margin",
                    [](RunConfig& c) -> double& { return c.train.loss.sas_margin; }));
    add(num<double>("loss.tau_r", kPub + ": tau_R = 0.3", "alignment threshold",
                    [](RunConfig& c) -> double& { return c.train.loss.tau_r; }));
    add(num<double>("loss.tau_s", kPub + ": tau_S = 0.5", "dominance threshold",
                    [](RunConfig& c) -> double& { return c.train.loss.tau_s; }));
    add(num<double>("loss.tau_u", kPub + ": tau_U = 1.5", "complementarity threshold",
                    [](RunConfig& c) -> double& { return c.train.loss.tau_u; }));
    add(num<double>("loss.lambda_lb", kPub + ": lambda_lb = 0.05", "load-balance weight",
                    [](RunConfig& c) -> double& { return c.train.loss.lambda_lb; }));
    add(num<double>("loss.lambda_val", kImpl, "validation loss weight",
                    [](RunConfig& c) -> double& { return c.train.loss.lambda_val; }));
    add(num<double>("loss.lambda_sas", kPub + ": lambda_s = 0.1", "SAS margin loss weight",
                    [](RunConfig& c) -> double& { return c.train.loss.lambda_sas; }));
    add(num<double>("loss.lambda_r", kImpl, "alignment regularizer weight",
                    [](RunConfig& c) -> double& { return c.train.loss.lambda_r; }));
    add(num<double>("loss.lambda_s", kImpl, "dominance regularizer weight",
                    [](RunConfig& c) -> double& { return c.train.loss.lambda_s; }));
    add(num<double>("loss.lambda_u", kImpl, "complementarity regularizer weight",
                    [](RunConfig& c) -> double& { return c.train.loss.lambda_u; }));
    {
        ConfigKey m{"loss.mode", kImpl + " (published main text mentions BCE)",
                    "per-pair-ce or multi-label-bce", nullptr, nullptr};
        m.set = [](RunConfig& c, const std::string& v) {
            const std::string t = trim(v);
            if (t == "per-pair-ce")
                c.train.loss.mode = objective::LossMode::PerPairCE;
            else if (t == "multi-label-bce")
                c.train.loss.mode = objective::LossMode::MultiLabelBCE;
            else
                throw ConfigError("bad value for loss.mode: '" + v + "'");
        };
        m.get = [](const RunConfig& c) {
            return std::string(c.train.loss.mode == objective::LossMode::PerPairCE ? "per-pair-ce" : "multi-label-bce");
        };
        add(m);
    }

    add(num<double>("train.lr_max", kPub + ": 5e-4 (appendix) / 2e-5 (main text)", "peak learning rate",
                    [](RunConfig& c) -> double& { return c.train.schedule.lr_max; }));
    add(num<double>("train.lr_min", kPub + ": eta_min = 1e-6", "cosine floor",
                    [](RunConfig& c) -> double& { return c.train.schedule.lr_min; }));
    add(num<long>("train.warmup", kPub + ": 500 warmup steps", "linear warmup steps",
                  [](RunConfig& c) -> long& { return c.train.schedule.warmup; }));
    add(num<long>("train.t0", kImpl + ": 0 = steps in 10 epochs", "first restart period in steps",
                  [](RunConfig& c) -> long& { return c.train.schedule.t0; }));
    add(num<double>("train.t_mult", kPub + ": T_mult = 2.0", "restart period multiplier",
                    [](RunConfig& c) -> double& { return c.train.schedule.t_mult; }));
    add(num<double>("train.beta1", kPub + ": beta1 = 0.9", "AdamW beta1",
                    [](RunConfig& c) -> double& { return c.train.adamw.beta1; }));
    add(num<double>("train.beta2", kPub + ": beta2 = 0.999", "AdamW beta2",
                    [](RunConfig& c) -> double& { return c.train.adamw.beta2; }));
    add(num<double>("train.eps", kPub + ": eps = 1e-8", "AdamW epsilon",
                    [](RunConfig& c) -> double& { return c.train.adamw.eps; }));
    add(num<double>("train.weight_decay", kPub + ": weight decay 0.01", "AdamW decoupled weight decay",
                    [](RunConfig& c) -> double& { return c.train.adamw.weight_decay; }));
    add(num<int>("train.batch", kPub + ": batch size 16", "batch size",
                 [](RunConfig& c) -> int& { return c.train.batch; }));
    add(num<int>("train.epochs", kPub + ": 50 (appendix) / 20 (main text)", "maximum epochs",
                 [](RunConfig& c) -> int& { return c.train.epochs; }));
    add(num<double>("train.grad_clip", kPub + ": gradient norm <= 1.0", "global gradient norm clip",
                    [](RunConfig& c) -> double& { return c.train.grad_clip; }));
    add(num<int>("train.patience", kPub + ": 15 (appendix) / 5 (main text)", "early-stopping patience in epochs",
                 [](RunConfig& c) -> int& { return c.train.patience; }));

    add(flag("augment.enabled", kPub + ": augmentation on", "image augmentation switch",
             [](RunConfig& c) -> bool& { return c.train.augment.enabled; }));
    add(num<double>("augment.mixup_alpha", kPub + ": MixUp alpha = 0.2", "MixUp Beta parameter",
                    [](RunConfig& c) -> double& { return c.train.augment.mixup_alpha; }));
    add(num<double>("augment.cutmix_alpha", kImpl, "CutMix Beta parameter for the cut area",
                    [](RunConfig& c) -> double& { return c.train.augment.cutmix_alpha; }));
    add(num<double>("augment.cutmix_prob", kPub + ": CutMix p = 0.5", "CutMix probability (MixUp otherwise)",
                    [](RunConfig& c) -> double& { return c.train.augment.cutmix_prob; }));
    add(num<double>("augment.erase_prob", kPub + ": random erasing p = 0.3", "random erasing probability",
                    [](RunConfig& c) -> double& { return c.train.augment.erase_prob; }));
    add(num<double>("augment.erase_area_min", kPub + ": area ratio range (0.02, 0.4)", "erase area lower bound",
                    [](RunConfig& c) -> double& { return c.train.augment.erase_area_min; }));
    add(num<double>("augment.erase_area_max", kPub + ": area ratio range (0.02, 0.4)", "erase area upper bound",
                    [](RunConfig& c) -> double& { return c.train.augment.erase_area_max; }));
    add(num<double>("augment.aspect_min", kImpl, "box aspect ratio lower bound",
                    [](RunConfig& c) -> double& { return c.train.augment.aspect_min; }));
    add(num<double>("augment.aspect_max", kImpl, "box aspect ratio upper bound",
                    [](RunConfig& c) -> double& { return c.train.augment.aspect_max; }));

    add(num<double>("pairing.w_text", kImpl, "S_text weight",
                    [](RunConfig& c) -> double& { return c.pairing.weights.text; }));
    add(num<double>("pairing.w_aspect", kImpl, "S_aspect weight",
                    [](RunConfig& c) -> double& { return c.pairing.weights.aspect; }));
    add(num<double>("pairing.w_severity", kImpl, "S_severity weight",
                    [](RunConfig& c) -> double& { return c.pairing.weights.severity; }));
    add(num<double>("pairing.theta_text", kImpl, "S_text threshold",
                    [](RunConfig& c) -> double& { return c.pairing.thresholds.text; }));
    add(num<double>("pairing.theta_aspect", kImpl, "S_aspect threshold",
                    [](RunConfig& c) -> double& { return c.pairing.thresholds.aspect; }));
    add(num<double>("pairing.theta_severity", kImpl, "S_severity threshold",
                    [](RunConfig& c) -> double& { return c.pairing.thresholds.severity; }));
    add(num<double>("pairing.theta_global", kImpl, "S_combined threshold",
                    [](RunConfig& c) -> double& { return c.pairing.thresholds.global; }));
    add(num<int>("pairing.conversations", kImpl, "mock-corpus conversations for `pair`",
                 [](RunConfig& c) -> int& { return c.pair_conversations; }));
    add(num<int>("pairing.images", kImpl, "mock images for `pair`", [](RunConfig& c) -> int& { return c.pair_images; }));
    {
        ConfigKey m{"analyze.matrix", kImpl, "expert matrix compared by `analyze`: alpha, w_in, w_out", nullptr,
                    nullptr};
        m.set = [](RunConfig& c, const std::string& v) {
            try {
                c.analyze_matrix = evalkit::parse_expert_matrix(trim(v));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        };
        m.get = [](const RunConfig& c) { return std::string(evalkit::expert_matrix_name(c.analyze_matrix)); };
        add(m);
    }
    return k;
}

const ConfigKey* find_key(const std::string& key)
{
    for (const auto& k : config_keys())
        if (k.key == key)
            return &k;
    return nullptr;
}

} // namespace

const std::vector<ConfigKey>& config_keys()
{
    static const std::vector<ConfigKey> keys = build_keys();
    return keys;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value)
{
    const ConfigKey* k = find_key(trim(key));
    if (!k)
        throw ConfigError("unknown config key: " + key);
    k->set(cfg, value);
}

std::string get_key(const RunConfig& cfg, const std::string& key)
{
    const ConfigKey* k = find_key(key);
    if (!k)
        throw ConfigError("unknown config key: " + key);
    return k->get(cfg);
}

namespace {

void appendix(RunConfig& c)
{
    c.train.schedule.lr_max = 5e-4;
    c.train.epochs = 50;
    c.train.patience = 15;
    c.train.model.meta.dropout = 0.1;
    c.train.loss.mode = objective::LossMode::PerPairCE;
}

void desk_dims(RunConfig& c)
{
    const RunConfig fresh;
    c.train.model = fresh.train.model;
    c.gen.vocab_size = fresh.gen.vocab_size;
    c.gen.image_side = fresh.gen.image_side;
}

void paper_dims(RunConfig& c)
{
    auto& m = c.train.model;
    m.encoder = {768, 12, 12, 512, 30522, 16, 224, 4};
    m.fusion.d = m.sas.d = m.experts.d = m.validation.d = 768;
    m.fusion.heads = 8;
    m.sas.shared_dim = 512;
    m.experts.d_t = 4096;
    m.validation.d_t = 4096;
    m.validation.layers = 32;
    m.validation.trainable_layers = 2;
    m.meta.hidden1 = 768;
    m.meta.hidden2 = 384;
    c.gen.vocab_size = 30522;
    c.gen.image_side = 224;
}

} // namespace

std::vector<std::string> preset_names()
{
    return {"desk", "paper", "appendix", "main-text"};
}

void apply_preset(RunConfig& cfg, const std::string& presets)
{
    std::stringstream ss(presets);
    std::string name;
    bool any = false;
    while (std::getline(ss, name, ',')) {
        name = trim(name);
        any = true;
        if (name == "desk") {
            desk_dims(cfg);
            appendix(cfg);
        } else if (name == "paper") {
            paper_dims(cfg);
            appendix(cfg);
        } else if (name == "appendix") {
            appendix(cfg);
        } else if (name == "main-text") {
            cfg.train.schedule.lr_max = 2e-5;
            cfg.train.epochs = 20;
            cfg.train.patience = 5;
            cfg.train.model.meta.dropout = 0.5;
            cfg.train.loss.mode = objective::LossMode::MultiLabelBCE;
        } else {
            throw ConfigError("unknown preset: " + name);
        }
    }
    if (!any)
        throw ConfigError("empty preset list");
    cfg.preset = presets;
}

void load_config_text(RunConfig& cfg, const std::string& text)
{
    std::stringstream ss(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty() && key.find('.') == std::string::npos)
            key = section + "." + key;
        const std::string value = trim(line.substr(eq + 1));
        if (key == "run.preset") {
            apply_preset(cfg, value);
            continue;
        }
        try {
            set_key(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void load_config_file(RunConfig& cfg, const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    load_config_text(cfg, ss.str());
}

std::string dump_config(const RunConfig& cfg)
{
    std::ostringstream os;
    os << "# preset applied: " << cfg.preset << "\n";
    // Reapplied on load before the explicit values below, so the record round-trips.
    os << "run.preset = " << cfg.preset << "\n";
    std::string section;
    for (const auto& k : config_keys()) {
        const std::string s = k.key.substr(0, k.key.find('.'));
        if (s != section) {
            os << (section.empty() ? "" : "\n");
            section = s;
        }
        os << k.key << " = " << k.get(cfg) << "  # " << k.source << "\n";
    }
    return os.str();
}

std::string config_help()
{
    std::ostringstream os;
    os << "Config keys (section.name = default  [source] description):\n";
    const RunConfig defaults;
    for (const auto& k : config_keys())
        os << "  " << k.key << " = " << k.get(defaults) << "  [" << k.source << "] " << k.help << "\n";
    os << "  run.preset = desk  (config files only) comma list of ";
    const auto names = preset_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        os << (i ? ", " : "") << names[i];
    os << "\n";
    return os.str();
}

} // namespace valor
