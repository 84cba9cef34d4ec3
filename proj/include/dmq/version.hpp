// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace dmq {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dmq
