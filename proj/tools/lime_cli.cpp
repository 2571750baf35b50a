// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "lime/cli.hpp"

int main(int argc, char** argv) {
    return lime::cli::run(argc, argv, std::cout, std::cerr);
}
