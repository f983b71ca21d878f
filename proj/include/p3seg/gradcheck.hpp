#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace p3seg {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    int instances = 0;
    bool pass = false;
};

// Central finite differences (step 1e-5) against the analytic gradients of
// every loss, plus the full model backward composite, on random 8x8
// 3-class instances. Pass threshold is relative error 1e-4.
std::vector<GradCheckResult> run_gradcheck(int instances = 20, std::uint64_t seed = 7);

// One line per check; returns false if any check failed.
bool print_gradcheck_table(std::ostream& out, const std::vector<GradCheckResult>& results);

} // namespace p3seg
