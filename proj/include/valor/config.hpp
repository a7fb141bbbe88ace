#pragma once

#include "valor/datagen.hpp"
#include "valor/evalkit.hpp"
#include "valor/pairing.hpp"
#include "valor/train.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace valor {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Everything a command can be configured with. One seed drives every
// named random substream.
struct RunConfig {
    std::string preset = "desk";
    std::uint64_t seed = 42;
    datagen::GenSpec gen;
    std::array<double, 3> split = {0.70, 0.10, 0.20};
    TrainConfig train;
    experts::SamplerConfig sampler;
    pairing::PairingConfig pairing;
    int pair_conversations = 100;
    int pair_images = 200;
    evalkit::ExpertMatrix analyze_matrix = evalkit::ExpertMatrix::WIn;

    // Seeds copied into the sub-configs that carry their own.
    datagen::GenSpec gen_spec() const;
    TrainConfig train_config() const;
};

struct ConfigKey {
    std::string key;    // section.name
    std::string source; // where the default comes from
    std::string help;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

// Registry in documentation order.
const std::vector<ConfigKey>& config_keys();

// Throws ConfigError on an unknown key or an unparsable value.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_key(const RunConfig& cfg, const std::string& key);

// Comma-separated list applied left to right over the current values:
// desk, paper, appendix, main-text.
void apply_preset(RunConfig& cfg, const std::string& presets);
std::vector<std::string> preset_names();

// "key = value" lines; '#' starts a comment; "[section]" prefixes the
// following bare keys with "section.".
void load_config_text(RunConfig& cfg, const std::string& text);
void load_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Every key, one per line, with its source as a trailing comment.
std::string dump_config(const RunConfig& cfg);

// Key table for --help.
std::string config_help();

} // namespace valor
