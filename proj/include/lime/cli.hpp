// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace lime::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,        // bad flags or invalid configuration
    kRuntime = 2,      // divergence, I/O or numeric failure
    kVerification = 3, // a verification command found a violation
};

/// Entry point of the `lime` tool. Normal output goes to `out`, diagnostics
/// to `err`; returns an ExitCode.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace lime::cli
