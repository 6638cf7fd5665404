// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "render/renderer.h"

namespace gsav::render {

// Differentiable render node: rgb [3,H,W] as a graph Value with gradients
// flowing to every cloud attribute.
nn::Value render_val(const gauss::CloudValues& cloud, const geom::CameraParams& cam,
                     const RenderConfig& cfg = {});

}  // namespace gsav::render
