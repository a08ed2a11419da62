#include "ossdet/model/detect_head.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace ossdet::model {

using namespace tensor;

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

DetectHead::DetectHead(ParamStore& ps, const HeadConfig& cfg, const std::string& prefix) : cfg_(cfg) {
  const std::size_t c = cfg.channels;
  tower = Conv::make(ps, prefix + "/tower", c, c, 3);
  cls = Conv::make(ps, prefix + "/cls", c, cfg.num_classes, 3, 1, Init::kaiming, 0.1,
                   -std::log((1.0 - cfg.prior) / cfg.prior));
  reg = Conv::make(ps, prefix + "/reg", c, kRegChannels, 3, 1, Init::kaiming, 0.1);
}

std::vector<LevelOutput> DetectHead::forward(std::span<const Tensor> levels) const {
  if (levels.size() != cfg_.strides.size()) {
    throw std::invalid_argument("head expects " + std::to_string(cfg_.strides.size()) + " levels");
  }
  std::vector<LevelOutput> out;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    Tensor t = relu(tower(levels[l]));
    out.push_back({cls(t), reg(t), cfg_.strides[l]});
  }
  return out;
}

std::array<double, kRegChannels> encode_box(const OrientedBox& box, double cx0, double cy0,
                                            double stride) {
  return {(box.cx - cx0) / stride,        (box.cy - cy0) / stride,
          std::log(box.w / stride),       std::log(box.h / stride),
          std::sin(2 * box.theta),        std::cos(2 * box.theta)};
}

OrientedBox decode_box(std::span<const double, kRegChannels> t, double cx0, double cy0,
                       double stride) {
  OrientedBox b;
  b.cx = cx0 + t[0] * stride;
  b.cy = cy0 + t[1] * stride;
  b.w = std::exp(std::min(t[2], 20.0)) * stride;
  b.h = std::exp(std::min(t[3], 20.0)) * stride;
  b.theta = 0.5 * std::atan2(t[4], t[5]);
  return geom::canonicalize(b);
}

std::vector<LevelTargets> assign_targets(const std::vector<std::vector<OrientedBox>>& boxes,
                                         std::span<const std::array<std::size_t, 2>> grids,
                                         const HeadConfig& cfg) {
  if (grids.size() != cfg.strides.size()) throw std::invalid_argument("one grid per head level");
  const std::size_t n = boxes.size(), k = cfg.num_classes;
  std::vector<LevelTargets> out(grids.size());
  for (std::size_t l = 0; l < grids.size(); ++l) {
    LevelTargets& t = out[l];
    t.height = grids[l][0];
    t.width = grids[l][1];
    t.stride = cfg.strides[l];
    const std::size_t hw = t.height * t.width;
    t.cls.assign(n * k * hw, 0.0);
    t.reg.assign(n * kRegChannels * hw, 0.0);
    t.positive.assign(n * hw, 0.0);
    t.owner.assign(n * hw, -1);
    const double lo = cfg.scale_lo[l];
    const double hi = l + 1 < cfg.scale_lo.size() ? cfg.scale_lo[l + 1] : std::numeric_limits<double>::infinity();
    const double s = double(t.stride);
    for (std::size_t b = 0; b < n; ++b) {
      int* owner = &t.owner[b * hw];
      const auto& bx = boxes[b];
      auto claim = [&](std::size_t cell, int idx) {
        int cur = owner[cell];
        if (cur < 0 || bx[idx].w * bx[idx].h < bx[cur].w * bx[cur].h) owner[cell] = idx;
      };
      std::vector<char> on_level(bx.size(), 0), claimed(bx.size(), 0);
      for (std::size_t i = 0; i < bx.size(); ++i) {
        double scale = std::sqrt(bx[i].w * bx[i].h);
        if (scale < lo || scale >= hi) continue;
        on_level[i] = 1;
        OrientedBox shrunk = bx[i];
        shrunk.w *= cfg.center_shrink;
        shrunk.h *= cfg.center_shrink;
        for (std::size_t r = 0; r < t.height; ++r) {
          for (std::size_t c = 0; c < t.width; ++c) {
            if (geom::contains(shrunk, {(c + 0.5) * s, (r + 0.5) * s})) {
              claim(r * t.width + c, int(i));
              claimed[i] = 1;
            }
          }
        }
      }
      for (std::size_t i = 0; i < bx.size(); ++i) {
        if (!on_level[i] || claimed[i]) continue;
        auto col = static_cast<std::ptrdiff_t>(std::floor(bx[i].cx / s));
        auto row = static_cast<std::ptrdiff_t>(std::floor(bx[i].cy / s));
        if (row < 0 || col < 0 || row >= std::ptrdiff_t(t.height) || col >= std::ptrdiff_t(t.width)) continue;
        std::size_t cell = std::size_t(row) * t.width + std::size_t(col);
        if (owner[cell] < 0) owner[cell] = int(i);
      }
      for (std::size_t cell = 0; cell < hw; ++cell) {
        int i = owner[cell];
        if (i < 0) continue;
        const OrientedBox& box = bx[i];
        if (box.class_id < 0 || std::size_t(box.class_id) >= k) {
          throw std::invalid_argument("box class " + std::to_string(box.class_id) + " outside head classes");
        }
        t.positive[b * hw + cell] = 1.0;
        t.cls[(b * k + std::size_t(box.class_id)) * hw + cell] = 1.0;
        double cx0 = (double(cell % t.width) + 0.5) * s, cy0 = (double(cell / t.width) + 0.5) * s;
        auto enc = encode_box(box, cx0, cy0, s);
        for (std::size_t j = 0; j < kRegChannels; ++j) t.reg[(b * kRegChannels + j) * hw + cell] = enc[j];
      }
    }
  }
  return out;
}

Tensor focal_loss_sum(const Tensor& logits, std::span<const double> targets, double alpha, double gamma) {
  const Shape s = logits.shape();
  if (targets.size() != s.numel()) throw ShapeError("focal_loss: targets do not match " + s.str());
  const auto x = logits.data();
  double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double p = stable_sigmoid(x[i]), t = targets[i];
    double log_p = -softplus(-x[i]), log_q = -softplus(x[i]);
    double f1 = -alpha * std::pow(1 - p, gamma) * log_p;
    double f0 = -(1 - alpha) * std::pow(p, gamma) * log_q;
    total += t * f1 + (1 - t) * f0;
  }
  std::vector<double> tcopy(targets.begin(), targets.end());
  return make_op("focal_loss", Shape{1, 1, 1, 1}, {total}, {logits},
                 [logits, alpha, gamma, t = std::move(tcopy)](const GradContext& ctx) {
                   const double g = ctx.out_grad()[0];
                   const auto gx = ctx.input_grad(0);
                   const auto x = logits.data();
                   for (std::size_t i = 0; i < x.size(); ++i) {
                     double p = stable_sigmoid(x[i]), q = stable_sigmoid(-x[i]);
                     double log_p = -softplus(-x[i]), log_q = -softplus(x[i]);
                     double d1 = alpha * std::pow(q, gamma) * (gamma * p * log_p - q);
                     double d0 = (1 - alpha) * std::pow(p, gamma) * (p - gamma * q * log_q);
                     gx[i] += g * (t[i] * d1 + (1 - t[i]) * d0);
                   }
                 });
}

Tensor smooth_l1_sum(const Tensor& pred, std::span<const double> target, std::span<const double> weight,
                     double beta) {
  const Shape s = pred.shape();
  if (target.size() != s.numel() || weight.size() != s.n * s.plane()) {
    throw ShapeError("smooth_l1: target/weight do not match " + s.str());
  }
  const auto x = pred.data();
  const std::size_t hw = s.plane();
  auto cell_weight = [s, hw](std::span<const double> w, std::size_t i) {
    return w[(i / s.item()) * hw + i % hw];
  };
  double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double w = cell_weight(weight, i);
    if (w == 0) continue;
    double d = std::abs(x[i] - target[i]);
    total += w * (d < beta ? 0.5 * d * d / beta : d - 0.5 * beta);
  }
  std::vector<double> tc(target.begin(), target.end()), wc(weight.begin(), weight.end());
  return make_op("smooth_l1", Shape{1, 1, 1, 1}, {total}, {pred},
                 [pred, beta, cell_weight, t = std::move(tc), w = std::move(wc)](const GradContext& ctx) {
                   const double g = ctx.out_grad()[0];
                   const auto gx = ctx.input_grad(0);
                   const auto x = pred.data();
                   for (std::size_t i = 0; i < x.size(); ++i) {
                     double wi = cell_weight(w, i);
                     if (wi == 0) continue;
                     double d = x[i] - t[i];
                     double dd = std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0);
                     gx[i] += g * wi * dd;
                   }
                 });
}

DetectionLoss detection_loss(std::span<const LevelOutput> out, std::span<const LevelTargets> targets,
                             const HeadConfig& cfg) {
  if (out.size() != targets.size()) throw std::invalid_argument("detection_loss: level count mismatch");
  DetectionLoss loss;
  Tensor cls_sum, reg_sum;
  for (std::size_t l = 0; l < out.size(); ++l) {
    const LevelTargets& t = targets[l];
    const Shape& cs = out[l].cls.shape();
    if (cs.h != t.height || cs.w != t.width) {
      throw ShapeError("detection_loss: level " + std::to_string(l) + " output " + cs.str() +
                       " vs targets " + std::to_string(t.height) + "x" + std::to_string(t.width));
    }
    for (double p : t.positive) loss.positives += p;
    Tensor c = focal_loss_sum(out[l].cls, t.cls, cfg.focal_alpha, cfg.focal_gamma);
    Tensor r = smooth_l1_sum(out[l].reg, t.reg, t.positive, cfg.smooth_l1_beta);
    cls_sum = cls_sum.defined() ? add(cls_sum, c) : c;
    reg_sum = reg_sum.defined() ? add(reg_sum, r) : r;
  }
  const double norm = 1.0 / std::max(1.0, loss.positives);
  loss.cls = scale(cls_sum, norm);
  loss.reg = scale(reg_sum, norm);
  loss.total = add(loss.cls, loss.reg);
  return loss;
}

Tensor total_loss(const Tensor& l_det, const Tensor& l_act, double alpha) {
  return add(l_det, scale(l_act, alpha));
}

std::vector<OrientedBox> rotated_nms(std::vector<OrientedBox> boxes, double iou_thresh) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return boxes[a].score.value_or(0) > boxes[b].score.value_or(0);
  });
  std::vector<OrientedBox> kept;
  for (std::size_t i : order) {
    const OrientedBox& cand = boxes[i];
    bool keep = true;
    for (const OrientedBox& k : kept) {
      if (k.class_id == cand.class_id && geom::rotated_iou(k, cand) > iou_thresh) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(cand);
  }
  return kept;
}

std::vector<OrientedBox> decode_and_nms(std::span<const LevelOutput> out, std::size_t n,
                                        const DecodeOptions& opt) {
  std::vector<OrientedBox> cands;
  for (const LevelOutput& lv : out) {
    const Shape cs = lv.cls.shape();
    if (n >= cs.n) throw std::out_of_range("decode_and_nms: batch index out of range");
    const std::size_t hw = cs.plane();
    const auto logits = lv.cls.data();
    const auto reg = lv.reg.data();
    const double s = double(lv.stride);
    for (std::size_t cell = 0; cell < hw; ++cell) {
      for (std::size_t k = 0; k < cs.c; ++k) {
        double score = stable_sigmoid(logits[(n * cs.c + k) * hw + cell]);
        if (!(score > opt.score_thresh)) continue;
        std::array<double, kRegChannels> t;
        for (std::size_t j = 0; j < kRegChannels; ++j) t[j] = reg[(n * kRegChannels + j) * hw + cell];
        OrientedBox b = decode_box(t, (double(cell % cs.w) + 0.5) * s, (double(cell / cs.w) + 0.5) * s, s);
        b.class_id = int(k);
        b.score = score;
        cands.push_back(b);
      }
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const OrientedBox& a, const OrientedBox& b) { return *a.score > *b.score; });
  if (cands.size() > opt.max_candidates) cands.resize(opt.max_candidates);
  return rotated_nms(std::move(cands), opt.iou_thresh);
}

std::string format_detections(std::span<const OrientedBox> boxes, const std::vector<std::string>& classes) {
  std::string out;
  char buf[64];
  for (const auto& b : boxes) {
    for (const auto& p : geom::corners(b)) {
      std::snprintf(buf, sizeof buf, "%.2f %.2f ", p.x, p.y);
      out += buf;
    }
    out += b.class_id >= 0 && std::size_t(b.class_id) < classes.size() ? classes[b.class_id]
                                                                        : std::to_string(b.class_id);
    std::snprintf(buf, sizeof buf, " %.6f\n", b.score.value_or(0.0));
    out += buf;
  }
  return out;
}

}  // namespace ossdet::model
