// Copyright 2026 The maskrec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace maskrec::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kNumericAbort = 2, kVerificationFailed = 3 };

// Runs one command line (without the program name). Normal output goes to
// `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Keeps freed tensor buffers in the heap instead of returning them to the OS
// after every training step. No-op outside glibc.
void tune_allocator();

}  // namespace maskrec::cli
