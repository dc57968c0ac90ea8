// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace tta {
inline constexpr const char* kVersion = "0.1.0";
}
