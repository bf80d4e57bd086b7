#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "din/config.hpp"
#include "din/gradcheck.hpp"

namespace din {

struct GradCheckRow {
    std::string name;
    GradCheckReport report;
};

// Finite-difference checks in double precision: every differentiable
// operator on random inputs, the model's building blocks, and the full model
// (all parameters) built from `model` on a 1x3x4x4 input.
[[nodiscard]] std::vector<GradCheckRow> run_gradcheck_suite(const ModelConfig& model, std::uint64_t seed,
                                                             double tolerance = 1e-4);

// Tab-separated `name coordinates max_rel max_abs PASS|FAIL`, one row per check.
[[nodiscard]] std::string format_gradcheck_report(const std::vector<GradCheckRow>& rows);

[[nodiscard]] bool all_pass(const std::vector<GradCheckRow>& rows);

}  // namespace din
