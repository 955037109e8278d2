#include "ldr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "ldr/error.hpp"

namespace ldr {

namespace fs = std::filesystem;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

CameraModel CameraSpec::model() const {
  CameraModel cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.image_w = width;
  cam.image_h = height;
  Mat3 r;
  r << 0, -1, 0,  //
      0, 0, -1,   //
      1, 0, 0;
  cam.cam_from_lidar.rotation = r;
  cam.cam_from_lidar.translation = -(r * position);
  return cam;
}

void SceneSpec::validate() const {
  if (min_objects < 0 || max_objects < min_objects) throw ConfigError("bad object count range");
  if (!(min_distance > 0.0) || max_distance < min_distance) throw ConfigError("bad distance range");
  if (!(point_density > 0.0)) throw ConfigError("point_density must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (mix.car < 0 || mix.pedestrian < 0 || mix.cyclist < 0 || mix.car + mix.pedestrian + mix.cyclist <= 0.0) {
    throw ConfigError("bad class mix");
  }
  if (camera.width < 1 || camera.height < 1) throw ConfigError("bad camera size");
}

void NoiseModel::validate() const {
  if (!(sigma0 >= 0.0) || !(sigma1 >= 0.0)) throw ConfigError("noise sigmas must be >= 0");
  if (bleed_width < 0 || !(bleed_magnitude >= 0.0)) throw ConfigError("bleed settings must be >= 0");
  if (!(bleed_probability >= 0.0 && bleed_probability <= 1.0)) throw ConfigError("bleed probability outside [0, 1]");
  if (!(false_surface_rate >= 0.0)) throw ConfigError("false_surface_rate must be >= 0");
}

NoiseModel NoiseModel::high_boundary() {
  NoiseModel n;
  n.sigma0 = 0.05;
  n.sigma1 = 0.01;
  n.bleed_width = 3;
  n.bleed_magnitude = 3.0;
  n.bleed_probability = 0.8;
  n.false_surface_rate = 2.0;
  return n;
}

std::vector<kitti::LidarPoint> Scene::lidar_points() const {
  std::vector<kitti::LidarPoint> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i] = {static_cast<float>(points[i].x()), static_cast<float>(points[i].y()),
              static_cast<float>(points[i].z()), static_cast<float>(intensities[i])};
  }
  return out;
}

std::array<double, 3> nominal_dims(ObjectClass c) {
  switch (c) {
    case ObjectClass::car: return {3.9, 1.6, 1.56};
    case ObjectClass::pedestrian: return {0.8, 0.6, 1.73};
    case ObjectClass::cyclist: return {1.76, 0.6, 1.73};
  }
  return {1, 1, 1};
}

namespace {

constexpr double kRayEps = 1e-9;

/// Entry distance of the ray o + t d into the box, if any.
std::optional<double> ray_box(const Vec3& o, const Vec3& d, const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const Vec3 rel = o - b.center;
  const Vec3 lo(c * rel.x() + s * rel.y(), -s * rel.x() + c * rel.y(), rel.z());
  const Vec3 ld(c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z());
  const Vec3 half(0.5 * b.length, 0.5 * b.width, 0.5 * b.height);
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(ld[a]) < 1e-15) {
      if (std::abs(lo[a]) > half[a]) return std::nullopt;
      continue;
    }
    double t1 = (-half[a] - lo[a]) / ld[a];
    double t2 = (half[a] - lo[a]) / ld[a];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
  }
  if (tmin > tmax || tmin <= kRayEps) return std::nullopt;
  return tmin;
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int surface = -1;  // 0 ground, k+1 box k
};

Hit cast(const Vec3& o, const Vec3& d, std::span<const Box3D> boxes, double ground_z, std::vector<int>* all_hits) {
  Hit h;
  if (d.z() < 0.0) {
    const double t = (ground_z - o.z()) / d.z();
    if (t > kRayEps) h = {t, 0};
  }
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    if (auto t = ray_box(o, d, boxes[k])) {
      if (all_hits) ++(*all_hits)[k];
      if (*t < h.t) h = {*t, static_cast<int>(k) + 1};
    }
  }
  return h;
}

std::array<double, 3> random_color(Rng& rng) {
  std::uniform_int_distribution<int> channel(40, 230);
  return {channel(rng) / 255.0, channel(rng) / 255.0, channel(rng) / 255.0};
}

ObjectClass sample_class(const ClassMix& mix, Rng& rng) {
  std::discrete_distribution<int> pick({mix.car, mix.pedestrian, mix.cyclist});
  return static_cast<ObjectClass>(pick(rng));
}

bool fully_visible(const Box3D& b, const CameraModel& cam) {
  for (const Vec3& c : box_corners(b)) {
    const auto px = project_lidar_to_image(c, cam);
    if (!px || px->u < 0.0 || px->v < 0.0 || px->u > cam.image_w - 1.0 || px->v > cam.image_h - 1.0) return false;
  }
  return true;
}

void render_camera(Scene& scene) {
  const CameraModel& cam = scene.camera;
  const int w = cam.image_w, h = cam.image_h;
  scene.clean_depth = Image(w, h, 1, 0.0);
  scene.surface.assign(static_cast<std::size_t>(w) * h, -1);
  scene.rgb = Image(w, h, 3, 0.0);
  const Mat3 rt = cam.cam_from_lidar.rotation.transpose();
  const Vec3 origin = cam.cam_from_lidar.apply_inverse(Vec3::Zero());
  std::vector<int> all_hits(scene.boxes.size(), 0), visible(scene.boxes.size(), 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Vec3 dc((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
      const Vec3 d = rt * dc;
      const Hit hit = cast(origin, d, scene.boxes, scene.ground_z, &all_hits);
      std::array<double, 3> color = kSkyColor;
      if (hit.surface >= 0 && hit.t * dc.norm() <= scene.max_range) {
        scene.clean_depth.at(u, v) = hit.t;
        scene.surface[static_cast<std::size_t>(v) * w + u] = hit.surface;
        color = hit.surface == 0 ? kGroundColor : scene.colors[hit.surface - 1];
        if (hit.surface > 0) ++visible[hit.surface - 1];
      }
      for (int c = 0; c < 3; ++c) scene.rgb.at(u, v, c) = color[c];
    }
  }
  scene.visible_fraction.resize(scene.boxes.size());
  for (std::size_t k = 0; k < scene.boxes.size(); ++k) {
    scene.visible_fraction[k] = all_hits[k] ? static_cast<double>(visible[k]) / all_hits[k] : 0.0;
  }
}

void sample_lidar(Scene& scene, const SceneSpec& spec, Rng& rng) {
  const double half_fov = std::atan((spec.camera.width * 0.5) / spec.camera.fx) + 0.05;
  const double sin_lo = std::sin(-24.9 * kPi / 180.0), sin_hi = std::sin(2.0 * kPi / 180.0);
  const double solid_angle = 2.0 * half_fov * (sin_hi - sin_lo);
  const auto rays = static_cast<std::size_t>(std::llround(spec.point_density * solid_angle));
  std::uniform_real_distribution<double> az(-half_fov, half_fov), el(sin_lo, sin_hi), unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.03);
  std::uniform_real_distribution<double> refl(0.3, 0.9);
  std::vector<double> reflectance(scene.boxes.size());
  for (auto& r : reflectance) r = refl(rng);
  for (std::size_t i = 0; i < rays; ++i) {
    const double a = az(rng);
    const double se = el(rng);
    const double ce = std::sqrt(1.0 - se * se);
    const bool dropped = unit(rng) < spec.dropout;
    const double noise = jitter(rng);
    const Vec3 d(ce * std::cos(a), ce * std::sin(a), se);
    const Hit hit = cast(Vec3::Zero(), d, scene.boxes, scene.ground_z, nullptr);
    if (hit.surface < 0 || hit.t > spec.max_range || dropped) continue;
    scene.points.push_back(hit.t * d);
    const double base = hit.surface == 0 ? 0.15 : reflectance[hit.surface - 1];
    scene.intensities.push_back(std::clamp(base + noise, 0.0, 1.0));
    scene.point_surface.push_back(hit.surface);
  }
}

}  // namespace

Scene build_scene(const SceneSpec& spec, std::vector<Box3D> boxes, std::vector<ObjectClass> classes) {
  spec.validate();
  if (boxes.size() != classes.size()) throw ShapeError("build_scene: one class per box expected");
  Rng rng(mix_seed(spec.seed, 0x5ce7e));
  Scene scene;
  scene.seed = spec.seed;
  scene.ground_z = spec.ground_z;
  scene.max_range = spec.max_range;
  scene.camera = spec.camera.model();
  scene.boxes = std::move(boxes);
  scene.classes = std::move(classes);
  for (std::size_t k = 0; k < scene.boxes.size(); ++k) scene.colors.push_back(random_color(rng));
  sample_lidar(scene, spec, rng);
  render_camera(scene);
  return scene;
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const CameraModel cam = spec.camera.model();
  std::uniform_int_distribution<int> count(spec.min_objects, spec.max_objects);
  const int n = count(rng);
  const double half_fov = std::atan((spec.camera.width * 0.5) / spec.camera.fx);
  std::uniform_real_distribution<double> dist(spec.min_distance, spec.max_distance);
  std::uniform_real_distribution<double> az(-half_fov, half_fov), yaw(-kPi, kPi);
  std::normal_distribution<double> size(0.0, 0.05);
  std::vector<Box3D> boxes;
  std::vector<ObjectClass> classes;
  for (int i = 0; i < n; ++i) {
    const ObjectClass c = sample_class(spec.mix, rng);
    const auto dims = nominal_dims(c);
    for (int attempt = 0; attempt < 50; ++attempt) {
      Box3D b;
      b.length = dims[0] * std::exp(size(rng));
      b.width = dims[1] * std::exp(size(rng));
      b.height = dims[2] * std::exp(size(rng));
      const double d = dist(rng), a = az(rng);
      b.yaw = wrap_angle(yaw(rng));
      b.center = Vec3(d * std::cos(a), d * std::sin(a), spec.ground_z + 0.5 * b.height);
      if (!fully_visible(b, cam)) continue;
      const double rb = 0.5 * std::hypot(b.length, b.width);
      bool clear = true;
      for (const Box3D& o : boxes) {
        const double ro = 0.5 * std::hypot(o.length, o.width);
        if ((b.center - o.center).head<2>().norm() < rb + ro + 0.3) clear = false;
      }
      if (!clear) continue;
      boxes.push_back(b);
      classes.push_back(c);
      break;
    }
  }
  return build_scene(spec, std::move(boxes), std::move(classes));
}

Image render_depth(const Scene& scene, const NoiseModel& noise, std::uint64_t noise_seed) {
  noise.validate();
  Rng rng(noise_seed);
  const Image& clean = scene.clean_depth;
  Image depth = clean;
  const int w = clean.width, h = clean.height, bw = noise.bleed_width;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (bw > 0) {
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        if (scene.surface_at(u, v) > 0) continue;
        int best_u = -1, best_v = -1, best_cheb = bw + 1, best_e = 0;
        for (int dv = -bw; dv <= bw; ++dv) {
          for (int du = -bw; du <= bw; ++du) {
            const int uu = u + du, vv = v + dv;
            if (!clean.in_bounds(uu, vv) || scene.surface_at(uu, vv) <= 0) continue;
            const int cheb = std::max(std::abs(du), std::abs(dv)), e = du * du + dv * dv;
            if (cheb < best_cheb || (cheb == best_cheb && e < best_e)) {
              best_cheb = cheb;
              best_e = e;
              best_u = uu;
              best_v = vv;
            }
          }
        }
        if (best_u < 0) continue;
        if (unit(rng) < noise.bleed_probability) {
          depth.at(u, v) = clean.at(best_u, best_v) + noise.bleed_magnitude * unit(rng);
        }
      }
    }
  }
  if (noise.sigma0 > 0.0 || noise.sigma1 > 0.0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& d : depth.data) {
      if (d <= 0.0) continue;
      d = std::max(0.1, d + (noise.sigma0 + noise.sigma1 * d) * gauss(rng));
    }
  }
  if (noise.false_surface_rate > 0.0) {
    std::poisson_distribution<int> blobs(noise.false_surface_rate);
    std::uniform_int_distribution<int> pu(0, w - 1), pv(0, h - 1), extent(2, 6);
    std::uniform_real_distribution<double> range(5.0, 40.0);
    const int n = blobs(rng);
    for (int i = 0; i < n; ++i) {
      const int u0 = pu(rng), v0 = pv(rng), sw = extent(rng), sh = extent(rng);
      const double d = range(rng);
      for (int v = v0; v < std::min(h, v0 + sh); ++v) {
        for (int u = u0; u < std::min(w, u0 + sw); ++u) depth.at(u, v) = d;
      }
    }
  }
  return depth;
}

std::vector<Proposal> make_proposals(std::span<const Box3D> boxes, std::span<const ObjectClass> classes,
                                     const ProposalConfig& cfg, std::uint64_t seed) {
  if (boxes.size() != classes.size()) throw ShapeError("make_proposals: one class per box expected");
  const JitterConfig& j = cfg.jitter;
  if (j.center_sigma < 0 || j.height_sigma < 0 || j.dim_sigma < 0 || j.yaw_sigma < 0 || !(cfg.distractor_rate >= 0)) {
    throw ConfigError("jitter and distractor settings must be >= 0");
  }
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Proposal> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    Box3D b = boxes[i];
    b.center.x() += j.center_sigma * gauss(rng);
    b.center.y() += j.center_sigma * gauss(rng);
    b.center.z() += j.height_sigma * gauss(rng);
    b.length *= std::exp(j.dim_sigma * gauss(rng));
    b.width *= std::exp(j.dim_sigma * gauss(rng));
    b.height *= std::exp(j.dim_sigma * gauss(rng));
    b.yaw = wrap_angle(b.yaw + j.yaw_sigma * gauss(rng));
    out.push_back({b, classes[i]});
  }
  const double expected = cfg.distractor_rate * static_cast<double>(boxes.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int extra = static_cast<int>(std::floor(expected));
  if (unit(rng) < expected - std::floor(expected)) ++extra;
  std::uniform_real_distribution<double> dist(cfg.min_distance, cfg.max_distance);
  std::uniform_real_distribution<double> az(-cfg.max_azimuth, cfg.max_azimuth), yaw(-kPi, kPi);
  for (int k = 0; k < extra && !boxes.empty(); ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, boxes.size() - 1);
    const ObjectClass c = classes[pick(rng)];
    const auto dims = nominal_dims(c);
    Box3D b;
    b.length = dims[0] * std::exp(0.05 * gauss(rng));
    b.width = dims[1] * std::exp(0.05 * gauss(rng));
    b.height = dims[2] * std::exp(0.05 * gauss(rng));
    const double d = dist(rng), a = az(rng);
    b.center = Vec3(d * std::cos(a), d * std::sin(a), cfg.ground_z + 0.5 * b.height);
    b.yaw = wrap_angle(yaw(rng));
    out.push_back({b, c});
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<GroundTruth> proxy_ground_truth(std::span<const Box3D> boxes, std::span<const ObjectClass> classes,
                                            std::span<const kitti::LidarPoint> points) {
  std::vector<GroundTruth> out;
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    int inside = 0;
    for (const auto& p : points) {
      if (point_in_box(p.position(), boxes[k])) ++inside;
    }
    const double distance = boxes[k].center.head<2>().norm();
    out.push_back({boxes[k], classes[k], assign_difficulty_proxy(distance, inside)});
  }
  return out;
}

// ---------------------------------------------------------------- frame sets

std::string frame_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

void write_frame(const fs::path& root, const std::string& id, const Scene& scene, const Image& depth,
                 std::span<const Proposal> proposals) {
  for (const char* sub : {"velodyne", "calib", "label_2", "depth", "image_2", "proposals"}) {
    fs::create_directories(root / sub);
  }
  kitti::write_velodyne(root / "velodyne" / (id + ".bin"), scene.lidar_points());
  kitti::write_calib(root / "calib" / (id + ".txt"), scene.camera);
  const kitti::Calibration calib = kitti::calibration_from_camera(scene.camera);
  std::vector<kitti::KittiLabel> labels;
  for (std::size_t k = 0; k < scene.boxes.size(); ++k) {
    kitti::KittiLabel l = kitti::box_to_label(scene.boxes[k], scene.classes[k], calib);
    const double vis = k < scene.visible_fraction.size() ? scene.visible_fraction[k] : 1.0;
    l.occlusion = vis >= 0.8 ? 0 : vis >= 0.5 ? 1 : vis >= 0.2 ? 2 : 3;
    labels.push_back(l);
  }
  kitti::write_labels(root / "label_2" / (id + ".txt"), labels);
  kitti::write_f32grid(root / "depth" / (id + ".f32grid"), depth);
  kitti::write_rgb_png(root / "image_2" / (id + ".png"), scene.rgb);
  std::vector<kitti::KittiLabel> props;
  for (const auto& p : proposals) {
    kitti::KittiLabel l = kitti::box_to_label(p.box, p.object_class, calib);
    l.score = 1.0;
    props.push_back(l);
  }
  kitti::write_labels(root / "proposals" / (id + ".txt"), props);
}

namespace {

fs::path first_existing(const fs::path& dir, const std::string& id, std::initializer_list<const char*> exts) {
  for (const char* e : exts) {
    fs::path p = dir / (id + e);
    if (fs::exists(p)) return p;
  }
  throw Error("missing " + (dir / (id + ".*")).string());
}

}  // namespace

FrameFiles read_frame(const fs::path& root, const std::string& id, bool with_camera) {
  FrameFiles f;
  f.id = id;
  f.points = kitti::read_velodyne(root / "velodyne" / (id + ".bin"));
  f.calib = kitti::read_calibration(root / "calib" / (id + ".txt"));
  const fs::path labels = root / "label_2" / (id + ".txt");
  if (fs::exists(labels)) f.labels = kitti::read_labels(labels);
  for (const auto& l : kitti::read_labels(root / "proposals" / (id + ".txt"))) {
    if (auto c = l.object_class()) f.proposals.push_back({kitti::label_to_box(l, f.calib), *c});
  }
  if (with_camera) {
    f.depth = kitti::read_depth(first_existing(root / "depth", id, {".f32grid", ".png"}));
    f.rgb = kitti::read_image(first_existing(root / "image_2", id, {".png", ".f32grid"}));
    if (f.calib.camera.image_w == 0) {
      f.calib.camera.image_w = f.depth.width;
      f.calib.camera.image_h = f.depth.height;
    }
  }
  return f;
}

std::vector<std::string> list_frames(const fs::path& root) {
  const fs::path dir = root / "velodyne";
  if (!fs::is_directory(dir)) throw Error("no velodyne/ directory under '" + root.string() + "'");
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".bin") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

FrameInput to_frame_input(const FrameFiles& frame, bool with_pseudo) {
  FrameInput in;
  in.points = frame.points;
  in.proposals = frame.proposals;
  if (with_pseudo) {
    if (frame.depth.empty()) throw ConfigError("frame " + frame.id + " has no depth map loaded");
    in.pseudo = depth_to_pseudo_cloud(frame.depth, frame.rgb, frame.calib.camera);
  }
  return in;
}

FrameInput SynthFrame::input(bool with_pseudo) const {
  FrameInput in;
  in.points = scene.lidar_points();
  in.proposals = proposals;
  if (with_pseudo) in.pseudo = depth_to_pseudo_cloud(depth, scene.rgb, scene.camera);
  return in;
}

FrameTruth SynthFrame::truth() const {
  const auto pts = scene.lidar_points();
  return {id, proxy_ground_truth(scene.boxes, scene.classes, pts)};
}

SynthFrame make_synth_frame(const SceneSpec& spec, const NoiseModel& noise, const ProposalConfig& proposals,
                            const std::string& id) {
  SynthFrame f;
  f.id = id;
  f.scene = generate_scene(spec);
  f.depth = render_depth(f.scene, noise, mix_seed(spec.seed, 1));
  f.proposals = make_proposals(f.scene.boxes, f.scene.classes, proposals, mix_seed(spec.seed, 2));
  return f;
}

// ---------------------------------------------------------------- benchmark

namespace {

std::string opt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

struct SceneResult {
  FrameTruth truth;
  // [noise][mode] detections
  std::vector<std::array<std::vector<Detection>, 4>> dets;
};

constexpr std::array<PipelineMode, 4> kBenchModes = {PipelineMode::stage1, PipelineMode::stage2,
                                                     PipelineMode::cascade, PipelineMode::pseudo};

}  // namespace

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg, const Model& model, const Model& pseudo_model) {
  cfg.pipeline.validate();
  cfg.eval.validate();
  for (const auto& n : cfg.noise_levels) n.noise.validate();
  const std::size_t per_seed = static_cast<std::size_t>(std::max(cfg.scenes_per_seed, 0));
  const std::size_t total = cfg.seeds.size() * per_seed;

  auto results = parallel_map(total, cfg.jobs, [&](std::size_t task) {
    const std::uint64_t seed = cfg.seeds[task / per_seed];
    const std::size_t idx = task % per_seed;
    SceneSpec spec = cfg.scene;
    spec.seed = mix_seed(seed, idx);
    const Scene scene = generate_scene(spec);
    const auto proposals = make_proposals(scene.boxes, scene.classes, cfg.proposals, mix_seed(spec.seed, 2));
    SceneResult r;
    const auto points = scene.lidar_points();
    r.truth = {frame_name(static_cast<int>(idx)), proxy_ground_truth(scene.boxes, scene.classes, points)};
    for (std::size_t n = 0; n < cfg.noise_levels.size(); ++n) {
      const Image depth = render_depth(scene, cfg.noise_levels[n].noise, mix_seed(spec.seed, 1 + n));
      FrameInput in;
      in.points = points;
      in.proposals = proposals;
      in.pseudo = depth_to_pseudo_cloud(depth, scene.rgb, scene.camera);
      PipelineConfig pc = cfg.pipeline;
      pc.mode = PipelineMode::cascade;
      const StageOutputs stages = run_stages(in, model, pc);
      std::array<std::vector<Detection>, 4> per_mode;
      per_mode[0] = postprocess(stages.stage1, pc);
      per_mode[1] = postprocess(stages.stage2, pc);
      per_mode[2] = postprocess(stages.fused, pc);
      pc.mode = PipelineMode::pseudo;
      per_mode[3] = run_pipeline(in, pseudo_model, pc);
      r.dets.push_back(std::move(per_mode));
    }
    return r;
  });

  BenchmarkReport report;
  for (std::size_t n = 0; n < cfg.noise_levels.size(); ++n) {
    for (std::size_t m = 0; m < kBenchModes.size(); ++m) {
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
        std::vector<FrameDetections> dets;
        std::vector<FrameTruth> gts;
        for (std::size_t i = 0; i < per_seed; ++i) {
          const SceneResult& r = results[s * per_seed + i];
          dets.push_back({r.truth.id, r.dets[n][m]});
          gts.push_back(r.truth);
        }
        const ApTable table = evaluate(dets, gts, cfg.eval);
        BenchmarkRow row;
        row.noise = cfg.noise_levels[n].name;
        row.mode = kBenchModes[m];
        row.seed = cfg.seeds[s];
        for (std::size_t k = 0; k < table.spaces.size(); ++k) {
          if (table.spaces[k] == MetricSpace::box3d) row.map3d_r40 = table.overall_r40[k];
          if (table.spaces[k] == MetricSpace::bev) row.mapbev_r40 = table.overall_r40[k];
        }
        if (std::find(table.spaces.begin(), table.spaces.end(), MetricSpace::box3d) != table.spaces.end()) {
          for (ObjectClass c : kAllClasses) {
            const ApEntry& e = table.at(c, Difficulty::moderate, MetricSpace::box3d);
            if (e.valid()) row.moderate3d_r40[static_cast<int>(c)] = e.ap_r40;
          }
        }
        report.rows.push_back(row);
      }
    }
  }
  return report;
}

std::string BenchmarkReport::to_csv() const {
  std::ostringstream os;
  os << "noise,mode,seed,map3d_r40,mapbev_r40,car_moderate3d_r40,pedestrian_moderate3d_r40,cyclist_moderate3d_r40\n";
  for (const auto& r : rows) {
    os << r.noise << ',' << mode_name(r.mode) << ',' << r.seed << ',' << opt(r.map3d_r40) << ','
       << opt(r.mapbev_r40);
    for (const auto& v : r.moderate3d_r40) os << ',' << opt(v);
    os << '\n';
  }
  return os.str();
}

std::string BenchmarkReport::to_text() const {
  std::ostringstream os;
  std::vector<std::string> noises;
  for (const auto& r : rows) {
    if (std::find(noises.begin(), noises.end(), r.noise) == noises.end()) noises.push_back(r.noise);
  }
  char buf[64];
  for (const auto& noise : noises) {
    os << "noise " << noise << " (overall 3D mAP, R40)\n";
    std::map<std::uint64_t, std::array<std::optional<double>, 4>> by_seed;
    for (PipelineMode m : kBenchModes) {
      double sum = 0.0;
      int n = 0;
      os << "  " << mode_name(m) << ':';
      for (const auto& r : rows) {
        if (r.noise != noise || r.mode != m) continue;
        os << ' ' << (r.map3d_r40 ? opt(r.map3d_r40) : std::string("n/a"));
        by_seed[r.seed][static_cast<int>(m)] = r.map3d_r40;
        if (r.map3d_r40) {
          sum += *r.map3d_r40;
          ++n;
        }
      }
      if (n > 0) {
        std::snprintf(buf, sizeof buf, "%.6f", sum / n);
        os << "  mean " << buf;
      }
      os << '\n';
    }
    int wins = 0, compared = 0;
    for (const auto& [seed, v] : by_seed) {
      const auto& c = v[static_cast<int>(PipelineMode::cascade)];
      const auto& p = v[static_cast<int>(PipelineMode::pseudo)];
      if (c && p) {
        ++compared;
        if (*c >= *p) ++wins;
      }
    }
    os << "  cascade >= pseudo on " << wins << " of " << compared << " seeds\n";
  }
  return os.str();
}

}  // namespace ldr
