#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ldr/cascade.hpp"
#include "ldr/eval.hpp"
#include "ldr/image.hpp"
#include "ldr/kitti_io.hpp"

namespace ldr {

/// Deterministic stream derivation for per-scene RNGs.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

struct CameraSpec {
  int width = 384;
  int height = 112;
  double fx = 200.0, fy = 200.0;
  double cx = 192.0, cy = 40.0;
  /// Camera center in the LiDAR frame.
  Vec3 position{0.3, 0.0, -0.1};

  CameraModel model() const;
};

struct ClassMix {
  double car = 0.6;
  double pedestrian = 0.2;
  double cyclist = 0.2;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int min_objects = 3;
  int max_objects = 8;
  ClassMix mix;
  double min_distance = 5.0;
  double max_distance = 60.0;
  /// LiDAR returns per steradian; a patch of area A at range d facing the
  /// sensor receives about density * A / d^2 points.
  double point_density = 20000.0;
  double dropout = 0.1;
  double ground_z = -1.73;
  double max_range = 80.0;
  CameraSpec camera;

  void validate() const;
};

/// Depth noise model, applied as boundary bleed, then Gaussian range noise,
/// then false-surface blobs.
struct NoiseModel {
  double sigma0 = 0.0;
  double sigma1 = 0.0;
  /// Background pixels within this Chebyshev distance of an object pixel may
  /// take the object's depth plus U(0, bleed_magnitude).
  int bleed_width = 0;
  double bleed_magnitude = 0.0;
  double bleed_probability = 1.0;
  /// Expected number of spurious depth blobs per image.
  double false_surface_rate = 0.0;

  void validate() const;
  static NoiseModel high_boundary();
};

struct Scene {
  std::uint64_t seed = 0;
  double ground_z = -1.73;
  double max_range = 80.0;
  CameraModel camera;
  std::vector<Box3D> boxes;
  std::vector<ObjectClass> classes;
  std::vector<std::array<double, 3>> colors;  // per box
  /// Share of each box's silhouette pixels not hidden by a nearer surface.
  std::vector<double> visible_fraction;
  /// Real LiDAR returns (double precision) with their surface: 0 ground, k+1 box k.
  std::vector<Vec3> points;
  std::vector<double> intensities;
  std::vector<int> point_surface;
  /// Noise-free z-buffer: camera depth per pixel (0 = nothing within range)
  /// and the surface id (-1 sky, 0 ground, k+1 box k).
  Image clean_depth;
  std::vector<int> surface;
  Image rgb;

  std::vector<kitti::LidarPoint> lidar_points() const;
  int surface_at(int u, int v) const { return surface[static_cast<std::size_t>(v) * clean_depth.width + u]; }
};

inline const std::array<double, 3> kGroundColor = {100.0 / 255, 100.0 / 255, 100.0 / 255};
inline const std::array<double, 3> kSkyColor = {135.0 / 255, 180.0 / 255, 230.0 / 255};

/// Nominal (l, w, h) per class.
std::array<double, 3> nominal_dims(ObjectClass c);

Scene generate_scene(const SceneSpec& spec);
/// Same sampling and rendering for caller-chosen boxes.
Scene build_scene(const SceneSpec& spec, std::vector<Box3D> boxes, std::vector<ObjectClass> classes);

Image render_depth(const Scene& scene, const NoiseModel& noise, std::uint64_t noise_seed);

struct JitterConfig {
  double center_sigma = 0.15;
  double height_sigma = 0.05;
  /// Log-scale sigma of every dimension.
  double dim_sigma = 0.05;
  double yaw_sigma = 0.05;
};

struct ProposalConfig {
  JitterConfig jitter;
  /// Distractors per ground-truth box: floor(rate * n) plus one with
  /// probability frac(rate * n).
  double distractor_rate = 2.0;
  double ground_z = -1.73;
  double min_distance = 5.0;
  double max_distance = 60.0;
  double max_azimuth = 0.7;
};

std::vector<Proposal> make_proposals(std::span<const Box3D> boxes, std::span<const ObjectClass> classes,
                                     const ProposalConfig& cfg, std::uint64_t seed);

/// Ground truth for evaluation, difficulty from the distance / point-count proxy.
std::vector<GroundTruth> proxy_ground_truth(std::span<const Box3D> boxes, std::span<const ObjectClass> classes,
                                            std::span<const kitti::LidarPoint> points);

// ---------------------------------------------------------------- frame sets

/// One frame of a KITTI-shaped directory: velodyne/, calib/, label_2/,
/// depth/ (.f32grid or .png), image_2/ and proposals/ with matching six-digit names.
struct FrameFiles {
  std::string id;
  std::vector<kitti::LidarPoint> points;
  kitti::Calibration calib;
  std::vector<kitti::KittiLabel> labels;
  Image depth;
  Image rgb;
  std::vector<Proposal> proposals;
};

std::string frame_name(int index);
void write_frame(const std::filesystem::path& root, const std::string& id, const Scene& scene, const Image& depth,
                 std::span<const Proposal> proposals);
/// Depth and image are loaded only when `with_camera` is set.
FrameFiles read_frame(const std::filesystem::path& root, const std::string& id, bool with_camera);
/// Frame ids found under velodyne/, sorted.
std::vector<std::string> list_frames(const std::filesystem::path& root);
FrameInput to_frame_input(const FrameFiles& frame, bool with_pseudo);

/// In-memory synthetic frame as the pipeline sees it.
struct SynthFrame {
  std::string id;
  Scene scene;
  Image depth;
  std::vector<Proposal> proposals;

  FrameInput input(bool with_pseudo) const;
  FrameTruth truth() const;
};

SynthFrame make_synth_frame(const SceneSpec& spec, const NoiseModel& noise, const ProposalConfig& proposals,
                            const std::string& id);

// ---------------------------------------------------------------- benchmark

struct NoiseLevel {
  std::string name;
  NoiseModel noise;
};

struct BenchmarkConfig {
  std::vector<std::uint64_t> seeds = {0};
  int scenes_per_seed = 10;
  SceneSpec scene;
  ProposalConfig proposals;
  std::vector<NoiseLevel> noise_levels = {{"none", {}}, {"high", NoiseModel::high_boundary()}};
  PipelineConfig pipeline;
  EvalConfig eval;
  int jobs = 1;
};

struct BenchmarkRow {
  std::string noise;
  PipelineMode mode = PipelineMode::cascade;
  std::uint64_t seed = 0;
  /// Overall mAP (3D, then BEV) at R40; nullopt without ground truth.
  std::optional<double> map3d_r40;
  std::optional<double> mapbev_r40;
  /// Moderate 3D R40 AP per class.
  std::array<std::optional<double>, 3> moderate3d_r40;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;

  std::string to_csv() const;
  /// Per noise level and mode: the per-seed values and their mean.
  std::string to_text() const;
};

/// Modes stage1, stage2 and cascade come from one cascade pass with `model`;
/// pseudo mode runs `pseudo_model`. Neither model is modified.
BenchmarkReport run_benchmark(const BenchmarkConfig& cfg, const Model& model, const Model& pseudo_model);

}  // namespace ldr
