// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "core/tensor.h"

namespace gsav {

// Lossless float32 dumps in npy v1.0 format ('<f4', C order).
void save_npy(const std::string& path, const Tensor& t);
Tensor load_npy(const std::string& path);

}  // namespace gsav
