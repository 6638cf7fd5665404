// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "render/render_op.h"

#include "kernels/kernels.h"

namespace gsav::render {

nn::Value render_val(const gauss::CloudValues& cloud, const geom::CameraParams& cam,
                     const RenderConfig& cfg) {
  gauss::GaussianCloud snapshot = cloud.detach();
  RenderOutput out = render(snapshot, cam, cfg);

  std::vector<nn::Value> parents = {cloud.pos, cloud.opacity, cloud.rot, cloud.scale,
                                    cloud.color};
  return nn::make_op(
      out.rgb.t, std::move(parents),
      [cloud, snapshot = std::move(snapshot), cam, cfg](nn::Node& self) {
        RenderGrads g = render_backward(snapshot, cam, cfg, self.grad, nullptr);
        auto add_to = [](const nn::Value& v, const Tensor& delta) {
          if (!v->requires_grad) return;
          v->ensure_grad();
          float* dst = v->grad.data();
          const float* src = delta.data();
          kernels::par_for(delta.numel(), [&](int64_t i) { dst[i] += src[i]; });
        };
        add_to(cloud.pos, g.pos);
        add_to(cloud.opacity, g.opacity);
        add_to(cloud.rot, g.rot);
        add_to(cloud.scale, g.scale);
        add_to(cloud.color, g.color);
      });
}

}  // namespace gsav::render
