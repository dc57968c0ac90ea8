// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tta {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Fast self-check suite over the library's analytic identities and plumbing
// contracts. Deterministic given the seed.
std::vector<CheckResult> run_invariant_checks(std::uint64_t seed = 17);

}  // namespace tta
