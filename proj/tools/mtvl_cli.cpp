// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#include <cstdio>

#include "mtvl/mtvl.h"

int main() {
  std::printf("mtvl %s\n", mtvl_version());
  return 0;
}
