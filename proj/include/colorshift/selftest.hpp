#pragma once

#include <iosfwd>

namespace colorshift {

struct SelftestOptions {
    // Debug hook: nudges the convolution kernel between the reference and the
    // checked computation, which must make the equivalence check fail.
    bool perturb_kernel = false;
};

// Runs the built-in operator-oracle, gradient, identity, metric, and
// round-trip checks, printing one PASS/FAIL line per check. Returns true iff
// everything passed.
bool run_selftest(const SelftestOptions& opt, std::ostream& out);

}  // namespace colorshift
