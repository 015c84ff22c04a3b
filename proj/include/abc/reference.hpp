// ----------------------------------------------------------------------------
// Copyright 2026 The ABC Attention Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

// Serial, loop-for-loop reference versions of the kernels in kernels.hpp.
// Kept deliberately naive; they are the oracle the parallel kernels are
// tested against.

#pragma once

#include "abc/numerics.hpp"

namespace abc::reference
{

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
void softmax_rows(Matrix& m);
Matrix build_memory(const Matrix& phi, const Matrix& x);
Vector cached_attention(std::span<const double> q, const Matrix& keys, const Matrix& values, std::size_t count,
                        double temperature);

}  // namespace abc::reference
