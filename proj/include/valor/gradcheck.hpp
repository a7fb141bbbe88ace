#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace valor::gradcheck {

struct Probe {
    std::string param;
    long row = 0, col = 0;
    double analytic = 0;
    double numeric = 0;
    double rel_error = 0;
};

struct Report {
    std::string op;
    double h = 1e-5;
    double tol = 1e-4;
    double max_rel_error = 0;
    bool passed = false;
    std::vector<Probe> probes;
};

// Registered differentiable ops: quadratic, text_encoder, image_encoder,
// fusion, sas, expert, moe, validation, metafuse, model.
std::vector<std::string> op_names();

// |a - n| / max(|a|, |n|, floor). Some gradients are exactly zero (attention
// key biases cancel in the softmax); their central difference is pure
// rounding noise around 1e-10, so below the floor the check is absolute.
inline constexpr double kRelFloor = 1e-3;
double relative_error(double analytic, double numeric);

// Builds the op on d = 8 toy dimensions at float64 with parameters drawn
// from `seed`, reduces its output to a scalar through a fixed random
// projection, and compares backward() against central differences at
// `probes` random trainable entries. Throws std::invalid_argument on an
// unknown op.
Report grad_check(const std::string& op, int probes = 20, double tol = 1e-4, std::uint64_t seed = 42, double h = 1e-5);

nlohmann::json to_json(const Report& r);

} // namespace valor::gradcheck
