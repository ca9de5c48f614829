// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#include <string>

namespace mtvl {

const char* version_string() { return "0.1.0"; }

}  // namespace mtvl
