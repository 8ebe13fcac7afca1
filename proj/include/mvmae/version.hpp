// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace mvmae {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mvmae
