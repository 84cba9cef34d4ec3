// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#if __has_include(<json.hpp>)
#include <json.hpp>
#else
#include <nlohmann/json.hpp>
#endif
