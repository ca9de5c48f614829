// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#include "mtvl/mtvl.h"

#define MTVL_EXPORT __attribute__((visibility("default")))

namespace mtvl {
const char* version_string();
}

extern "C" MTVL_EXPORT const char* mtvl_version(void) { return mtvl::version_string(); }
