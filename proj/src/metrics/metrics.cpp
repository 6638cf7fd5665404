// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "metrics/metrics.h"

#include <cmath>
#include <stdexcept>

#include "metrics/perceptual.h"

namespace gsav::metrics {

double mse(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::runtime_error("mse: shape mismatch");
  const float* pa = a.data();
  const float* pb = b.data();
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  const double m = mse(a, b);
  if (m <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(peak * peak / m));
}

namespace {

constexpr int kWin = 11;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWin * kWin);
  const double sigma = 1.5;
  double sum = 0.0;
  for (int y = 0; y < kWin; ++y)
    for (int x = 0; x < kWin; ++x) {
      const double dy = y - kWin / 2, dx = x - kWin / 2;
      w[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      sum += w[y * kWin + x];
    }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<double> to_gray(const Image& img) {
  const int C = img.channels(), H = img.height(), W = img.width();
  std::vector<double> g(static_cast<size_t>(H) * W, 0.0);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) g[static_cast<size_t>(y) * W + x] += img.at(c, y, x);
  for (double& v : g) v /= C;
  return g;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (!a.t.same_shape(b.t)) throw std::runtime_error("ssim: shape mismatch");
  const int H = a.height(), W = a.width();
  if (H < kWin || W < kWin) throw std::runtime_error("ssim: image smaller than window");

  static const std::vector<double> win = gaussian_window();
  const std::vector<double> ga = to_gray(a);
  const std::vector<double> gb = to_gray(b);

  const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + kWin <= H; ++y) {
    for (int x = 0; x + kWin <= W; ++x) {
      double ma = 0, mb = 0;
      for (int wy = 0; wy < kWin; ++wy)
        for (int wx = 0; wx < kWin; ++wx) {
          const double wgt = win[wy * kWin + wx];
          ma += wgt * ga[static_cast<size_t>(y + wy) * W + x + wx];
          mb += wgt * gb[static_cast<size_t>(y + wy) * W + x + wx];
        }
      double va = 0, vb = 0, cov = 0;
      for (int wy = 0; wy < kWin; ++wy)
        for (int wx = 0; wx < kWin; ++wx) {
          const double wgt = win[wy * kWin + wx];
          const double da = ga[static_cast<size_t>(y + wy) * W + x + wx] - ma;
          const double db = gb[static_cast<size_t>(y + wy) * W + x + wx] - mb;
          va += wgt * da * da;
          vb += wgt * db * db;
          cov += wgt * da * db;
        }
      const double s = ((2 * ma * mb + C1) * (2 * cov + C2)) /
                       ((ma * ma + mb * mb + C1) * (va + vb + C2));
      total += s;
      ++count;
    }
  }
  return total / count;
}

nlohmann::json evaluate_images(const std::vector<Image>& pred,
                               const std::vector<Image>& gt, const PerceptualNet& net) {
  if (pred.size() != gt.size())
    throw std::runtime_error("evaluate: view count mismatch");
  nlohmann::json per_view = nlohmann::json::array();
  double sm = 0, sp = 0, ss = 0, sperc = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double m = mse(pred[i].t, gt[i].t);
    const double p = psnr(pred[i].t, gt[i].t);
    const double s = ssim(pred[i], gt[i]);
    const double pc = net.distance(pred[i].t, gt[i].t);
    per_view.push_back({{"mse", m}, {"psnr", p}, {"ssim", s}, {"perceptual", pc}});
    sm += m;
    sp += p;
    ss += s;
    sperc += pc;
  }
  const double n = static_cast<double>(pred.size());
  nlohmann::json out;
  out["per_view"] = per_view;
  out["aggregate"] = {{"mse", sm / n},
                      {"psnr", sp / n},
                      {"ssim", ss / n},
                      {"perceptual", sperc / n}};
  return out;
}

nn::Value total_loss_stage2(const nn::Value& pred_views, const nn::Value& target_views,
                            const nn::Value& pred_face, const nn::Value& target_face,
                            const LossWeights& w, const PerceptualNet& net) {
  std::vector<std::pair<float, nn::Value>> terms = {
      {w.lambda_rgb, nn::mse(pred_views, target_views)},
      {w.lambda_lpips, net.distance_val(pred_views, target_views)}};
  if (pred_face && target_face)
    terms.emplace_back(w.lambda_face, net.distance_val(pred_face, target_face));
  return nn::weighted_sum(terms);
}

}  // namespace gsav::metrics
