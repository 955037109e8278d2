#include "ldr/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>

namespace ldr {

namespace {

constexpr double kStrict = 1e-5;  // plain MLPs, focal, smooth-L1
constexpr double kLoose = 1e-4;   // everything else

/// Free-standing tensor for inputs that are not network parameters.
struct Buffer {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;

  ParamTensor view() { return {name, value, grad}; }
};

Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

/// Random pixel-grid cloud with a few holes.
PseudoCloud random_cloud(Rng& rng, int w, int h) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PseudoCloud c;
  c.width = w;
  c.height = h;
  c.pixel_index.assign(static_cast<std::size_t>(w) * h, -1);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (unit(rng) < 0.2) continue;
      PseudoPoint p;
      p.x = 10.0 + 2.0 * unit(rng);
      p.y = -1.0 + 2.0 * unit(rng);
      p.z = -1.0 + unit(rng);
      p.r = unit(rng);
      p.g = unit(rng);
      p.b = unit(rng);
      p.u = u;
      p.v = v;
      p.d = p.position().norm();
      c.pixel_index[static_cast<std::size_t>(v) * w + u] = static_cast<int>(c.points.size());
      c.source_index.push_back(static_cast<int>(c.points.size()));
      c.points.push_back(p);
    }
  }
  return c;
}

HprConfig small_hpr() {
  HprConfig cfg;
  cfg.steps = 2;
  cfg.widths = {3, 4};
  cfg.initial_width = 3;
  cfg.encoder_hidden = 4;
  cfg.theta_hidden = 4;
  return cfg;
}

GradCheckOptions options(double tol, std::uint64_t seed, std::size_t max_entries = 0) {
  GradCheckOptions o;
  o.tolerance = tol;
  o.seed = seed;
  o.max_entries_per_tensor = max_entries;
  // Composite cases contain max/min and polygon clipping; the smooth ones stay
  // fully compared.
  if (tol >= kLoose) o.kink_tolerance = 1e-4;
  return o;
}

GradCase check_mlp(std::uint64_t seed) {
  Rng rng(seed);
  Mlp net({5, 7, 6, 4}, Activation::relu, Activation::identity, rng);
  for (auto& l : net.layers()) l.bias = random_matrix(static_cast<int>(l.bias.size()), 1, rng, 0.1);
  Buffer x{"input", {}, {}};
  const Matrix x0 = random_matrix(5, 1, rng);
  x.value.assign(x0.data(), x0.data() + x0.size());
  const Vector w = random_matrix(4, 1, rng);
  auto f = [&] {
    const Vector in = Eigen::Map<const Vector>(x.value.data(), 5);
    return w.dot(net.forward(in).col(0));
  };
  net.zero_grad();
  const Vector in = Eigen::Map<const Vector>(x.value.data(), 5);
  MlpApplyResult r = mlp_apply(net, in);
  const Vector dx = r.backward(w);
  x.grad.assign(dx.data(), dx.data() + dx.size());
  std::vector<ParamTensor> params;
  net.collect_parameters(params, "mlp");
  params.push_back(x.view());
  return {"mlp_apply", seed, kStrict, grad_check(f, params, options(kStrict, seed))};
}

GradCase check_fusion(std::uint64_t seed) {
  Rng rng(seed);
  const int wc = 12, wl = 8;
  Mlp fusion({wc + wl, 6}, Activation::relu, Activation::relu, rng);
  fusion.layers()[0].bias = random_matrix(6, 1, rng, 0.1);
  Buffer pc{"pseudo_feature", {}, {}}, lf{"lidar_feature", {}, {}};
  const Matrix a = random_matrix(wc, 1, rng), b = random_matrix(wl, 1, rng);
  pc.value.assign(a.data(), a.data() + wc);
  lf.value.assign(b.data(), b.data() + wl);
  const Vector w = random_matrix(6, 1, rng);
  auto features = [&] {
    RoiFeature p{Eigen::Map<const Vector>(pc.value.data(), wc), FeatureSource::pseudo};
    RoiFeature l{Eigen::Map<const Vector>(lf.value.data(), wl), FeatureSource::lidar};
    return std::make_pair(p, l);
  };
  auto f = [&] {
    auto [p, l] = features();
    return w.dot(fuse_roi_features(p, l, fusion).values);
  };
  fusion.zero_grad();
  auto [p, l] = features();
  Vector cat(wc + wl);
  cat << p.values, l.values;
  Mlp::Cache cache;
  fusion.forward(cat, &cache);
  const Matrix dcat = fusion.backward(cache, w);
  pc.grad.assign(dcat.data(), dcat.data() + wc);
  lf.grad.assign(dcat.data() + wc, dcat.data() + wc + wl);
  std::vector<ParamTensor> params;
  fusion.collect_parameters(params, "fusion");
  params.push_back(pc.view());
  params.push_back(lf.view());
  return {"fuse_roi_features", seed, kStrict, grad_check(f, params, options(kStrict, seed))};
}

// Fresh nets have zero biases, so all-zero inputs (empty cells, dead points,
// zero self residuals) land exactly on relu kinks. Checks run off that set.
void jitter_biases(const std::vector<ParamTensor>& ps, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xb1a5));
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  for (const ParamTensor& p : ps) {
    if (p.name.size() >= 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0) {
      for (double& v : p.value) v += jitter(rng);
    }
  }
}

GradCase check_hpr_step(std::uint64_t seed) {
  Rng rng(seed);
  const HprConfig cfg = small_hpr();
  HprParams params(cfg, rng);
  {
    std::vector<ParamTensor> all;
    params.collect_parameters(all, "hpr");
    jitter_biases(all, seed);
  }
  const PseudoCloud cloud = random_cloud(rng, 5, 4);
  const NeighborTable nbrs = neighbor_table(cloud, cfg.radius);
  const HprInputs inputs = hpr_inputs(cloud, cfg);
  const int t = 1, c = cfg.width_at(t), n = static_cast<int>(cloud.size());
  Buffer feat{"features", {}, {}};
  const Matrix f0 = random_matrix(c, n, rng);
  feat.value.assign(f0.data(), f0.data() + f0.size());
  const Matrix w = random_matrix(cfg.width_at(t + 1), n, rng);
  auto f = [&] {
    const Matrix s = Eigen::Map<const Matrix>(feat.value.data(), c, n);
    return hpr_step(t, s, nbrs, inputs.positions, params).cwiseProduct(w).sum();
  };
  params.zero_grad();
  HprStepCache cache;
  hpr_step(t, Eigen::Map<const Matrix>(feat.value.data(), c, n), nbrs, inputs.positions, params, &cache);
  const Matrix ds = hpr_step_backward(t, cache, w, nbrs, params);
  feat.grad.assign(ds.data(), ds.data() + ds.size());
  std::vector<ParamTensor> ps;
  params.theta[t].collect_parameters(ps, "theta1");
  params.gamma[t].collect_parameters(ps, "gamma1");
  ps.push_back(feat.view());
  return {"hpr_step", seed, kLoose, grad_check(f, ps, options(kLoose, seed))};
}

GradCase check_hpr_encode(std::uint64_t seed) {
  Rng rng(seed);
  const HprConfig cfg = small_hpr();
  HprParams params(cfg, rng);
  {
    std::vector<ParamTensor> all;
    params.collect_parameters(all, "hpr");
    jitter_biases(all, seed);
  }
  const PseudoCloud cloud = random_cloud(rng, 5, 4);
  const Matrix w = random_matrix(cfg.output_width(), static_cast<int>(cloud.size()), rng);
  auto f = [&] { return hpr_encode(cloud, cfg, params).features.cwiseProduct(w).sum(); };
  params.zero_grad();
  HprEncodeCache cache;
  hpr_encode(cloud, cfg, params, &cache);
  hpr_encode_backward(cfg, cache, w, params);
  std::vector<ParamTensor> ps;
  params.collect_parameters(ps, "hpr");
  return {"hpr_encode", seed, kLoose, grad_check(f, ps, options(kLoose, seed))};
}

GradCase check_focal(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> prob(0.02, 0.98), logit(-4.0, 4.0);
  Buffer p{"p", {prob(rng), prob(rng)}, {}}, z{"logit", {logit(rng), logit(rng)}, {}};
  const int y0 = 1, y1 = 0;
  auto f = [&] {
    return focal_loss(p.value[0], y0).value + focal_loss(p.value[1], y1).value +
           focal_loss_logit(z.value[0], y0).value + focal_loss_logit(z.value[1], y1).value;
  };
  p.grad = {focal_loss(p.value[0], y0).grad, focal_loss(p.value[1], y1).grad};
  z.grad = {focal_loss_logit(z.value[0], y0).grad, focal_loss_logit(z.value[1], y1).grad};
  std::vector<ParamTensor> ps = {p.view(), z.view()};
  return {"focal_loss", seed, kStrict, grad_check(f, ps, options(kStrict, seed))};
}

GradCase check_smooth_l1(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  Buffer x{"x", {}, {}};
  while (x.value.size() < 4) {
    const double v = u(rng);
    if (std::abs(std::abs(v) - 1.0) > 1e-3) x.value.push_back(v);
  }
  auto f = [&] {
    double s = 0.0;
    for (double v : x.value) s += smooth_l1(v).value;
    return s;
  };
  for (double v : x.value) x.grad.push_back(smooth_l1(v).grad);
  std::vector<ParamTensor> ps = {x.view()};
  return {"smooth_l1", seed, kStrict, grad_check(f, ps, options(kStrict, seed))};
}

Box3D box_from(const std::vector<double>& v) {
  Box3D b;
  b.center = Vec3(v[0], v[1], v[2]);
  b.length = v[3];
  b.width = v[4];
  b.height = v[5];
  b.yaw = v[6];
  return b;
}

GradCase check_giou(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> yaw(-kPi, kPi);
  Box3D gt;
  gt.center = Vec3(g(rng), g(rng), 0.3 * g(rng));
  gt.length = 3.0 + 0.5 * std::abs(g(rng));
  gt.width = 1.5 + 0.2 * std::abs(g(rng));
  gt.height = 1.4 + 0.2 * std::abs(g(rng));
  gt.yaw = yaw(rng);
  // Disjoint or partly overlapping predictions, jittered off degenerate alignments.
  Buffer pred{"pred_box",
              {gt.center.x() + 1.5 * g(rng), gt.center.y() + 1.0 * g(rng), gt.center.z() + 0.3 * g(rng),
               gt.length * std::exp(0.2 * g(rng)), gt.width * std::exp(0.2 * g(rng)),
               gt.height * std::exp(0.2 * g(rng)), wrap_angle(gt.yaw + 0.5 * g(rng))},
              {}};
  auto f = [&] { return giou_loss(box_from(pred.value), gt).value; };
  const BoxLoss l = giou_loss(box_from(pred.value), gt);
  pred.grad.assign(l.d_pred.begin(), l.d_pred.end());
  std::vector<ParamTensor> ps = {pred.view()};
  return {"giou_loss", seed, kLoose, grad_check(f, ps, options(kLoose, seed))};
}

GradCase check_total_loss_heads(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int r1 = 6, r2 = 5;
  auto make_targets = [&](int n) {
    std::vector<RoiTarget> t(n);
    for (auto& x : t) {
      x.anchor.center = Vec3(10 * unit(rng), 10 * unit(rng), -1.0);
      x.anchor.length = 3.9;
      x.anchor.width = 1.6;
      x.anchor.height = 1.5;
      x.anchor.yaw = wrap_angle(6.0 * unit(rng));
      x.positive = unit(rng) < 0.5;
      x.gt = x.anchor;
      x.gt.center += Vec3(0.3 * g(rng), 0.3 * g(rng), 0.1 * g(rng));
      x.gt.yaw = wrap_angle(x.gt.yaw + 0.1 * g(rng));
      x.residual = encode_box(x.gt, x.anchor);
    }
    return t;
  };
  LossInputs in;
  in.stage1_targets = make_targets(r1);
  in.stage2_targets = make_targets(r2);
  std::vector<Buffer> bufs;
  for (const char* name : {"stage1_out", "fused_out", "lidar_aux_out", "pseudo_aux_out"}) {
    const int n = std::string(name) == "stage1_out" ? r1 : r2;
    Buffer b{name, {}, {}};
    // Residual offsets are kept below the smooth-L1 knee so no entry sits on it.
    for (int i = 0; i < n * 8; ++i) b.value.push_back(i % 8 == 0 ? 2.0 * g(rng) : 0.3 * g(rng));
    bufs.push_back(b);
  }
  auto unpack = [&](const Buffer& b) {
    std::vector<HeadOutput> out(b.value.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].logit = b.value[8 * i];
      for (int k = 0; k < 7; ++k) out[i].residual[k] = b.value[8 * i + 1 + k];
    }
    return out;
  };
  auto fill = [&] {
    in.stage1 = unpack(bufs[0]);
    in.fused = unpack(bufs[1]);
    in.lidar_aux = unpack(bufs[2]);
    in.pseudo_aux = unpack(bufs[3]);
  };
  auto f = [&] {
    fill();
    return total_loss(in).breakdown.total;
  };
  fill();
  const TotalLoss t = total_loss(in);
  const HeadLoss* heads[4] = {&t.stage1, &t.fused, &t.lidar_aux, &t.pseudo_aux};
  for (int h = 0; h < 4; ++h) {
    bufs[h].grad.assign(bufs[h].value.size(), 0.0);
    for (std::size_t i = 0; i < heads[h]->d_logit.size(); ++i) {
      bufs[h].grad[8 * i] = heads[h]->d_logit[i];
      for (int k = 0; k < 7; ++k) bufs[h].grad[8 * i + 1 + k] = heads[h]->d_residual[i][k];
    }
  }
  std::vector<ParamTensor> ps;
  for (auto& b : bufs) ps.push_back(b.view());
  return {"total_loss", seed, kLoose, grad_check(f, ps, options(kLoose, seed))};
}

GradCase check_model_loss(std::uint64_t seed) {
  const TrainConfig cfg = tiny_train_config(seed);
  Model model(tiny_model_config(), mix_seed(seed, 0x30de1));
  jitter_biases(model.parameters(), seed);
  std::vector<TrainingSample> batch = {training_sample(cfg, 0)};
  model.zero_grad();
  const BatchLoss base = batch_loss(model, batch, cfg, true);
  auto f = [&] { return batch_loss(model, batch, cfg, false, &base.rois).breakdown.total; };
  return {"total_loss(model)", seed, kLoose, grad_check(f, model.parameters(), options(kLoose, seed, 4))};
}

}  // namespace

ModelConfig tiny_model_config() {
  ModelConfig m;
  m.hpr = small_hpr();
  m.refine.subdivisions = 2;
  m.voxel_hidden = 4;
  m.voxel_width = 3;
  m.head_hidden = 5;
  m.fusion_width = 6;
  m.grid.voxel_size = 0.4;
  return m;
}

TrainConfig tiny_train_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.scenes = 1;
  cfg.steps = 0;
  cfg.scene.camera.width = 64;
  cfg.scene.camera.height = 20;
  cfg.scene.camera.fx = cfg.scene.camera.fy = 40.0;
  cfg.scene.camera.cx = 32.0;
  cfg.scene.camera.cy = 7.0;
  cfg.scene.min_objects = 1;
  cfg.scene.max_objects = 2;
  cfg.scene.min_distance = 8.0;
  cfg.scene.max_distance = 20.0;
  cfg.scene.point_density = 3000.0;
  cfg.noise.sigma0 = 0.02;
  cfg.proposals.distractor_rate = 1.0;
  cfg.proposals.min_distance = 8.0;
  cfg.proposals.max_distance = 20.0;
  return cfg;
}

bool GradSuiteReport::passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const GradCase& c) { return c.report.passed; });
}

std::string GradSuiteReport::summary() const {
  std::map<std::string, const GradCase*> worst;
  std::vector<std::string> order;
  for (const auto& c : cases) {
    auto it = worst.find(c.name);
    if (it == worst.end()) {
      worst[c.name] = &c;
      order.push_back(c.name);
    } else if (c.report.max_rel_error > it->second->report.max_rel_error) {
      it->second = &c;
    }
  }
  std::ostringstream os;
  char buf[256];
  for (const auto& name : order) {
    const GradCase& c = *worst[name];
    int n = 0, ok = 0;
    std::size_t checked = 0, kinks = 0;
    for (const auto& x : cases) {
      if (x.name == name) {
        ++n;
        ok += x.report.passed;
        checked += x.report.checked;
        kinks += x.report.kinks;
      }
    }
    std::snprintf(buf, sizeof buf,
                  "%-20s %2d/%2d seeds pass  worst %.3e (tol %.0e, seed %llu, %s[%zu])  %zu entries, %zu near kinks\n",
                  name.c_str(), ok, n, c.report.max_rel_error, c.tolerance,
                  static_cast<unsigned long long>(c.seed), c.report.worst_tensor.c_str(), c.report.worst_index,
                  checked, kinks);
    os << buf;
  }
  for (const auto& c : cases) {
    if (c.report.passed) continue;
    std::snprintf(buf, sizeof buf, "FAIL %s seed %llu: %s[%zu] analytic %.9e numeric %.9e\n", c.name.c_str(),
                  static_cast<unsigned long long>(c.seed), c.report.worst_tensor.c_str(), c.report.worst_index,
                  c.report.worst_analytic, c.report.worst_numeric);
    os << buf;
  }
  return os.str();
}

GradSuiteReport run_gradient_suite(int seeds, std::uint64_t base_seed) {
  const auto start = std::chrono::steady_clock::now();
  GradSuiteReport report;
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = mix_seed(base_seed, static_cast<std::uint64_t>(s));
    for (auto fn : {check_mlp, check_fusion, check_hpr_step, check_hpr_encode, check_focal, check_smooth_l1,
                    check_giou, check_total_loss_heads, check_model_loss}) {
      report.cases.push_back(fn(seed));
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace ldr
