#include <gtest/gtest.h>

#include <map>
#include <random>

#include "ldr/detector.hpp"
#include "support/oracles.hpp"

using namespace ldr;
using kitti::LidarPoint;

namespace {

std::vector<LidarPoint> random_points(std::mt19937_64& rng, int n, double spread) {
  std::uniform_real_distribution<float> u(static_cast<float>(-spread), static_cast<float>(spread)), i(0.f, 1.f);
  std::vector<LidarPoint> pts(n);
  for (auto& p : pts) p = {10.f + u(rng), u(rng), u(rng) * 0.3f, i(rng)};
  return pts;
}

Box3D box(double x, double y, double z, double l, double w, double h, double yaw = 0.0) {
  Box3D b;
  b.center = Vec3(x, y, z);
  b.length = l;
  b.width = w;
  b.height = h;
  b.yaw = yaw;
  return b;
}

Mlp zero_net(int in, int hidden, int out) {
  DenseLayer a, b;
  a.weight = Matrix::Zero(hidden, in);
  a.bias = Vector::Zero(hidden);
  a.activation = Activation::relu;
  b.weight = Matrix::Zero(out, hidden);
  b.bias = Vector::Zero(out);
  return Mlp({a, b});
}

DetectionHead zero_head(int in) {
  DetectionHead h;
  h.cls = zero_net(in, 4, 1);
  h.reg = zero_net(in, 4, 7);
  return h;
}

}  // namespace

TEST(Voxelize, OneVoxelAndDuplicates) {
  GridConfig cfg;
  std::vector<LidarPoint> pts = {{10.01f, 0.01f, 0.01f, 0.2f}, {10.05f, 0.15f, 0.1f, 0.6f}};
  VoxelGrid g = voxelize_lidar(pts, cfg);
  ASSERT_EQ(g.size(), 1u);
  const Vector once = g.features.col(0);
  auto doubled = pts;
  doubled.insert(doubled.end(), pts.begin(), pts.end());
  g = voxelize_lidar(doubled, cfg);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_LT((g.features.col(0).head(4) - once.head(4)).norm(), 1e-12);
  EXPECT_DOUBLE_EQ(g.features(4, 0), 4.0 / kVoxelCountNorm);
  EXPECT_EQ(extract_spatial_features({}, cfg, zero_net(5, 3, 8)).size(), 0u);
}

TEST(Voxelize, MeansMatchNaiveLoop) {
  std::mt19937_64 rng(1);
  const auto pts = random_points(rng, 3000, 1.0);
  GridConfig cfg;
  const VoxelGrid g = voxelize_lidar(pts, cfg);
  std::map<std::array<long, 3>, std::vector<int>> naive;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    naive[{static_cast<long>(std::floor((pts[i].x - cfg.min_bound.x()) / cfg.voxel_size)),
           static_cast<long>(std::floor((pts[i].y - cfg.min_bound.y()) / cfg.voxel_size)),
           static_cast<long>(std::floor((pts[i].z - cfg.min_bound.z()) / cfg.voxel_size))}]
        .push_back(i);
  }
  ASSERT_EQ(g.size(), naive.size());
  std::size_t v = 0;
  for (const auto& [key, members] : naive) {
    EXPECT_EQ(g.coords[v][0], key[0]);
    EXPECT_EQ(g.coords[v][2], key[2]);
    double ix = 0, in = 0;
    for (int i : members) {
      ix += (pts[i].x - g.centers[v].x()) / cfg.voxel_size;
      in += pts[i].intensity;
    }
    EXPECT_NEAR(g.features(0, v), ix / members.size(), 1e-12);
    EXPECT_NEAR(g.features(3, v), in / members.size(), 1e-12);
    EXPECT_DOUBLE_EQ(g.features(4, v), std::min(members.size() / kVoxelCountNorm, 1.0));
    ++v;
  }
}

TEST(Voxelize, FeatureBackwardIsMeanAdjoint) {
  std::mt19937_64 rng(2);
  std::vector<Vec3> pos;
  for (const auto& p : random_points(rng, 200, 0.4)) pos.push_back(p.position());
  const Matrix payload = Matrix::Random(3, 200);
  const VoxelGrid g = voxelize_features(pos, payload, GridConfig{});
  const Matrix w = Matrix::Random(3, static_cast<Eigen::Index>(g.size()));
  const Matrix d = voxelize_features_backward(g, w);
  EXPECT_NEAR((g.features.cwiseProduct(w)).sum(), (payload.cwiseProduct(d)).sum(), 1e-10);
}

TEST(RoiPool, SingleVoxelAndEmptySpace) {
  std::vector<LidarPoint> pts = {{10.05f, 0.05f, 0.05f, 0.5f}};
  const VoxelGrid g = voxelize_lidar(pts, GridConfig{});
  const RoiFeature f = roi_pool(g, box(10.1, 0.1, 0.1, 2, 2, 2), 1, FeatureSource::lidar);
  EXPECT_EQ(f.values, Vector(g.features.col(0)));
  EXPECT_TRUE(roi_pool(g, box(40, 0, 0, 2, 2, 2), 6, FeatureSource::lidar).values.isZero(0));
}

TEST(RoiPool, CellMembershipMatchesBruteForce) {
  std::mt19937_64 rng(3);
  const VoxelGrid g = voxelize_lidar(random_points(rng, 5000, 3.0), GridConfig{});
  for (int t = 0; t < 10; ++t) {
    Box3D roi = oracle::random_box(rng, 1.0);
    roi.center.x() += 10;
    const int G = 3;
    const RoiCells cells = roi_pool_cells(g, roi, G);
    std::vector<std::vector<int>> expect(G * G * G);
    for (std::size_t v = 0; v < g.size(); ++v) {
      const Vec3 c = g.centers[v];
      if (!oracle::inside(roi, c.x(), c.y(), c.z())) continue;
      const double cs = std::cos(roi.yaw), sn = std::sin(roi.yaw);
      const double lx = cs * (c.x() - roi.center.x()) + sn * (c.y() - roi.center.y());
      const double ly = -sn * (c.x() - roi.center.x()) + cs * (c.y() - roi.center.y());
      const double lz = c.z() - roi.center.z();
      const int ix = std::min(G - 1, static_cast<int>((lx / roi.length + 0.5) * G));
      const int iy = std::min(G - 1, static_cast<int>((ly / roi.width + 0.5) * G));
      const int iz = std::min(G - 1, static_cast<int>((lz / roi.height + 0.5) * G));
      expect[(ix * G + iy) * G + iz].push_back(static_cast<int>(v));
    }
    EXPECT_EQ(cells, expect);
  }
}

TEST(RoiPool, EnumerationOrderInvariant) {
  std::mt19937_64 rng(6);
  auto pts = random_points(rng, 2000, 2.0);
  const Box3D roi = box(10, 0, 0, 3, 2, 1, 0.3);
  const Vector a = roi_pool(voxelize_lidar(pts, GridConfig{}), roi, 6, FeatureSource::lidar).values;
  std::reverse(pts.begin(), pts.end());
  const Vector b = roi_pool(voxelize_lidar(pts, GridConfig{}), roi, 6, FeatureSource::lidar).values;
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Psw, ConstantClampedAndRamp) {
  BevClassMap m;
  m.x0 = 0;
  m.y0 = -10;
  m.resolution = 0.5;
  m.nx = 40;
  m.ny = 40;
  m.values.assign(1600, 0.7);
  EXPECT_NEAR(psw_score(m, box(5, 0, 0, 4, 2, 1, 0.4), 4), 0.7, 1e-12);
  // ramp along x: value at cell center x = (ix + 0.5) * res
  for (int ix = 0; ix < m.nx; ++ix) {
    for (int iy = 0; iy < m.ny; ++iy) m.at(ix, iy) = 0.02 * ((ix + 0.5) * m.resolution);
  }
  const Box3D b = box(7.3, 1.2, 0, 3, 1.6, 1, 0.7);
  EXPECT_NEAR(psw_score(m, b, 4), 0.02 * b.center.x(), 1e-9);
  const double edge = m.at(m.nx - 1, 0);
  EXPECT_NEAR(psw_score(m, box(500, 0, 0, 1, 1, 1), 4), edge, 1e-12);
}

TEST(BevMap, ValuesInUnitInterval) {
  std::mt19937_64 rng(7);
  const BevClassMap m = make_bev_class_map(random_points(rng, 4000, 4.0), BevMapConfig{});
  for (double v : m.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Codec, RoundTrips) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 0.5);
  for (int t = 0; t < 200; ++t) {
    const Box3D a = oracle::random_box(rng);
    BoxResidual r;
    for (auto& v : r) v = n(rng);
    r[6] = std::clamp(r[6], -3.0, 3.0);
    const BoxResidual back = encode_box(decode_box(r, a), a);
    for (int k = 0; k < 7; ++k) {
      if (k == 6) {
        EXPECT_NEAR(std::remainder(back[k] - r[k], 2 * kPi), 0.0, 1e-9);
      } else {
        EXPECT_NEAR(back[k], r[k], 1e-9);
      }
    }
    const Box3D target = oracle::random_box(rng);
    const Box3D again = decode_box(encode_box(target, a), a);
    EXPECT_LT((again.center - target.center).norm(), 1e-9);
    EXPECT_NEAR(again.length, target.length, 1e-9);
    EXPECT_NEAR(std::remainder(again.yaw - target.yaw, 2 * kPi), 0.0, 1e-9);
  }
}

TEST(Codec, JacobianMatchesDifferences) {
  const Box3D a = box(3, -1, 0.2, 4, 1.8, 1.5, 0.3);
  const BoxResidual r = {0.1, -0.2, 0.05, 0.2, -0.1, 0.3, 0.4};
  const auto j = decode_box_jacobian(r, a);
  for (int k = 0; k < 7; ++k) {
    BoxResidual p = r, m = r;
    p[k] += 1e-6;
    m[k] -= 1e-6;
    const Box3D bp = decode_box(p, a), bm = decode_box(m, a);
    const double vp[7] = {bp.center.x(), bp.center.y(), bp.center.z(), bp.length, bp.width, bp.height, bp.yaw};
    const double vm[7] = {bm.center.x(), bm.center.y(), bm.center.z(), bm.length, bm.width, bm.height, bm.yaw};
    EXPECT_NEAR(j[k], (vp[k] - vm[k]) / 2e-6, 1e-6);
  }
}

TEST(Stage1, ZeroHeadKeepsProposalsAndAverages) {
  std::mt19937_64 rng(10);
  const VoxelGrid g = extract_spatial_features(random_points(rng, 500, 2.0), GridConfig{}, zero_net(5, 3, 8));
  BevClassMap m;
  m.nx = m.ny = 2;
  m.values.assign(4, 0.6);
  std::vector<Proposal> props = {{box(10, 0, 0, 4, 2, 1.5, 0.2), ObjectClass::cyclist}};
  const auto out = stage1_refine(g, props, m, zero_head(6 * 6 * 6 * 8), RefineConfig{});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_LT((out[0].box.center - props[0].box.center).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(out[0].box.length, 4);
  EXPECT_DOUBLE_EQ(out[0].score, 0.5 * (0.5 + 0.6));
  EXPECT_EQ(out[0].object_class, ObjectClass::cyclist);
}

TEST(Fusion, IdentityNetAndTags) {
  DenseLayer l;
  l.weight = Matrix::Identity(5, 5);
  l.bias = Vector::Zero(5);
  const Mlp id({l});
  RoiFeature c{Vector::LinSpaced(2, 1, 2), FeatureSource::pseudo};
  RoiFeature f{Vector::LinSpaced(3, 3, 5), FeatureSource::lidar};
  const RoiFeature out = fuse_roi_features(c, f, id);
  EXPECT_EQ(out.source, FeatureSource::fused);
  EXPECT_EQ(out.values, Vector::LinSpaced(5, 1, 5));
  EXPECT_THROW(fuse_roi_features(f, c, id), std::invalid_argument);

  Rng rng(1);
  const Mlp net({5, 4}, Activation::relu, Activation::identity, rng);
  RoiFeature zero{Vector::Zero(2), FeatureSource::pseudo};
  Mlp only_lidar = net;
  only_lidar.layers()[0].weight.leftCols(2).setRandom();
  EXPECT_EQ(fuse_roi_features(zero, f, net).values, fuse_roi_features(zero, f, only_lidar).values);
}

TEST(Stage2, ZeroHeadsGiveRoisAndHalf) {
  const VoxelGrid empty_pseudo = voxelize_features({}, Matrix::Zero(4, 0), GridConfig{});
  std::mt19937_64 rng(11);
  const VoxelGrid lidar = extract_spatial_features(random_points(rng, 300, 2.0), GridConfig{}, zero_net(5, 3, 2));
  Rng prng(0);
  const Mlp fusion({8 * 6, 6}, Activation::relu, Activation::relu, prng);
  Detection roi{box(10, 0, 0, 3, 2, 1), 0.9, ObjectClass::car};
  RefineConfig cfg;
  cfg.subdivisions = 2;
  const auto out = stage2_refine(lidar, empty_pseudo, std::span(&roi, 1), zero_head(6), fusion, cfg);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].score, 0.5);
  EXPECT_EQ(out[0].box.center, roi.box.center);
}

TEST(Stage2, MatchesNaiveSingleRoiPath) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(seed);
    Rng prng(seed);
    const Mlp voxel_net({5, 4, 3}, Activation::relu, Activation::identity, prng);
    const auto pts = random_points(rng, 800, 2.0);
    const VoxelGrid lidar = extract_spatial_features(pts, GridConfig{}, voxel_net);
    std::vector<Vec3> ppos;
    for (const auto& p : random_points(rng, 600, 2.0)) ppos.push_back(p.position());
    const VoxelGrid pseudo = voxelize_features(ppos, Matrix::Random(4, 600), GridConfig{});
    const int G = 2;
    const Mlp fusion({G * G * G * 7, 5}, Activation::relu, Activation::relu, prng);
    DetectionHead head(5, 4, prng, 1.0);
    const Detection roi{box(10.2, 0.1, 0, 3, 2, 1.2, 0.5), 0.7, ObjectClass::pedestrian};
    RefineConfig cfg;
    cfg.subdivisions = G;
    const Detection fast = stage2_refine(lidar, pseudo, std::span(&roi, 1), head, fusion, cfg)[0];

    // Reference: brute-force pooling then explicit matrix loops.
    auto pool = [&](const VoxelGrid& g) {
      Vector out = Vector::Zero(G * G * G * g.feature_width());
      std::vector<int> count(G * G * G, 0);
      for (std::size_t v = 0; v < g.size(); ++v) {
        const Vec3 c = g.centers[v];
        if (!oracle::inside(roi.box, c.x(), c.y(), c.z())) continue;
        const double cs = std::cos(roi.box.yaw), sn = std::sin(roi.box.yaw);
        const double lx = cs * (c.x() - roi.box.center.x()) + sn * (c.y() - roi.box.center.y());
        const double ly = -sn * (c.x() - roi.box.center.x()) + cs * (c.y() - roi.box.center.y());
        const double lz = c.z() - roi.box.center.z();
        const int ix = std::min(G - 1, static_cast<int>((lx / roi.box.length + 0.5) * G));
        const int iy = std::min(G - 1, static_cast<int>((ly / roi.box.width + 0.5) * G));
        const int iz = std::min(G - 1, static_cast<int>((lz / roi.box.height + 0.5) * G));
        const int cell = (ix * G + iy) * G + iz;
        out.segment(cell * g.feature_width(), g.feature_width()) += g.features.col(v);
        ++count[cell];
      }
      for (int cell = 0; cell < G * G * G; ++cell) {
        if (count[cell]) out.segment(cell * g.feature_width(), g.feature_width()) /= count[cell];
      }
      return out;
    };
    Vector cat(G * G * G * 7);
    cat << pool(pseudo), pool(lidar);
    auto dense = [](const Mlp& net, Vector x) {
      for (const auto& l : net.layers()) {
        Vector y(l.weight.rows());
        for (int r = 0; r < l.weight.rows(); ++r) {
          double acc = l.bias(r);
          for (int c = 0; c < l.weight.cols(); ++c) acc += l.weight(r, c) * x(c);
          y(r) = l.activation == Activation::relu ? std::max(acc, 0.0) : acc;
        }
        x = y;
      }
      return x;
    };
    const Vector fused = dense(fusion, cat);
    const double logit = dense(head.cls, fused)(0);
    const Vector reg = dense(head.reg, fused);
    BoxResidual r;
    for (int k = 0; k < 7; ++k) r[k] = reg(k);
    const Box3D expect = decode_box(r, roi.box);
    EXPECT_NEAR(fast.score, 1.0 / (1.0 + std::exp(-logit)), 1e-12);
    EXPECT_LT((fast.box.center - expect.center).norm(), 1e-12);
    EXPECT_NEAR(fast.box.length, expect.length, 1e-12);
    EXPECT_NEAR(fast.box.yaw, expect.yaw, 1e-12);
  }
}
