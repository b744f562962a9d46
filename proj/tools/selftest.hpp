/* Copyright 2026 The qvqa Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef QVQA_TOOLS_SELFTEST_HPP_
#define QVQA_TOOLS_SELFTEST_HPP_

#include <cstdint>
#include <ostream>

// Quick end-to-end checks behind `qvqa selftest`; prints one line per suite.
bool RunSelfTest(std::uint64_t seed, std::ostream& out);

#endif  // QVQA_TOOLS_SELFTEST_HPP_
