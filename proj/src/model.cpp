#include "ldr/model.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ldr/error.hpp"

namespace ldr {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace {

constexpr char kCheckpointMagic[8] = {'L', 'D', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename Range>
std::string join(const Range& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    out += fmt(static_cast<double>(v));
  }
  return out;
}

std::vector<double> split_numbers(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("empty list entry for '" + key + "'");
    item = item.substr(b, e - b + 1);
    double v = 0.0;
    auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
      throw ConfigError("bad number '" + item + "' for '" + key + "'");
    }
    out.push_back(v);
  }
  return out;
}

double one(const std::string& key, const std::string& value) {
  auto v = split_numbers(key, value);
  if (v.size() != 1) throw ConfigError("'" + key + "' expects one value");
  return v[0];
}

int one_int(const std::string& key, const std::string& value) {
  const double v = one(key, value);
  if (v != static_cast<int>(v)) throw ConfigError("'" + key + "' expects an integer");
  return static_cast<int>(v);
}

Vec3 three(const std::string& key, const std::string& value) {
  auto v = split_numbers(key, value);
  if (v.size() != 3) throw ConfigError("'" + key + "' expects three values");
  return {v[0], v[1], v[2]};
}

void set_key(ModelConfig& c, const std::string& key, const std::string& value) {
  if (key == "hpr.steps") c.hpr.steps = one_int(key, value);
  else if (key == "hpr.radius") c.hpr.radius = one_int(key, value);
  else if (key == "hpr.widths") {
    c.hpr.widths.clear();
    for (double w : split_numbers(key, value)) c.hpr.widths.push_back(static_cast<int>(w));
  } else if (key == "hpr.initial_width") c.hpr.initial_width = one_int(key, value);
  else if (key == "hpr.encoder_hidden") c.hpr.encoder_hidden = one_int(key, value);
  else if (key == "hpr.theta_hidden") c.hpr.theta_hidden = one_int(key, value);
  else if (key == "hpr.attribute_scale") {
    auto v = split_numbers(key, value);
    if (v.size() != c.hpr.attribute_scale.size()) throw ConfigError("'hpr.attribute_scale' expects six values");
    std::copy(v.begin(), v.end(), c.hpr.attribute_scale.begin());
  } else if (key == "grid.voxel_size") c.grid.voxel_size = one(key, value);
  else if (key == "grid.min_bound") c.grid.min_bound = three(key, value);
  else if (key == "grid.max_bound") c.grid.max_bound = three(key, value);
  else if (key == "refine.subdivisions") c.refine.subdivisions = one_int(key, value);
  else if (key == "refine.psw_samples") c.refine.psw_samples = one_int(key, value);
  else if (key == "bev.x_range") {
    auto v = split_numbers(key, value);
    if (v.size() != 2) throw ConfigError("'bev.x_range' expects two values");
    c.bev.x_min = v[0];
    c.bev.x_max = v[1];
  } else if (key == "bev.y_range") {
    auto v = split_numbers(key, value);
    if (v.size() != 2) throw ConfigError("'bev.y_range' expects two values");
    c.bev.y_min = v[0];
    c.bev.y_max = v[1];
  } else if (key == "bev.resolution") c.bev.resolution = one(key, value);
  else if (key == "bev.min_height") c.bev.min_height = one(key, value);
  else if (key == "bev.saturation") c.bev.saturation = one(key, value);
  else if (key == "voxel_hidden") c.voxel_hidden = one_int(key, value);
  else if (key == "voxel_width") c.voxel_width = one_int(key, value);
  else if (key == "head_hidden") c.head_hidden = one_int(key, value);
  else if (key == "fusion_width") c.fusion_width = one_int(key, value);
  else if (key == "crop_margin") c.crop_margin = one(key, value);
  else if (key == "head_output_gain") c.head_output_gain = one(key, value);
  else if (key == "roi_input_scale") c.roi_input_scale = one(key, value);
  else throw ConfigError("unknown model key '" + key + "'");
}

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

struct Reader {
  const std::string& where;
  std::ifstream& is;

  void raw(void* dst, std::size_t n) {
    is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!is) throw FormatError(where + "@byte " + std::to_string(static_cast<long long>(is.gcount())), "truncated");
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    raw(&v, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 24)) throw FormatError(where, "implausible string length");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
};

}  // namespace

int ModelConfig::lidar_feature_width() const {
  const int g = refine.subdivisions;
  return g * g * g * voxel_width;
}

int ModelConfig::pseudo_feature_width() const {
  const int g = refine.subdivisions;
  return g * g * g * hpr.output_width();
}

void ModelConfig::validate() const {
  hpr.validate();
  if (!(grid.voxel_size > 0.0)) throw ConfigError("grid.voxel_size must be positive");
  if ((grid.max_bound - grid.min_bound).minCoeff() <= 0.0) throw ConfigError("grid extent is empty");
  if (refine.subdivisions < 1 || refine.psw_samples < 1) throw ConfigError("refine settings must be >= 1");
  if (!(bev.resolution > 0.0) || bev.x_max <= bev.x_min || bev.y_max <= bev.y_min) {
    throw ConfigError("bad BEV map extent");
  }
  if (!(bev.saturation > 0.0)) throw ConfigError("bev.saturation must be positive");
  if (voxel_hidden < 1 || voxel_width < 1 || head_hidden < 1 || fusion_width < 1) {
    throw ConfigError("network widths must be >= 1");
  }
  if (!(crop_margin >= 0.0)) throw ConfigError("crop_margin must be >= 0");
  if (!(roi_input_scale > 0.0 && roi_input_scale <= 1.0)) throw ConfigError("roi_input_scale must lie in (0, 1]");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "hpr.steps = " << hpr.steps << '\n'
     << "hpr.radius = " << hpr.radius << '\n'
     << "hpr.widths = " << join(hpr.widths) << '\n'
     << "hpr.initial_width = " << hpr.initial_width << '\n'
     << "hpr.encoder_hidden = " << hpr.encoder_hidden << '\n'
     << "hpr.theta_hidden = " << hpr.theta_hidden << '\n'
     << "hpr.attribute_scale = " << join(hpr.attribute_scale) << '\n'
     << "grid.voxel_size = " << fmt(grid.voxel_size) << '\n'
     << "grid.min_bound = " << join(grid.min_bound) << '\n'
     << "grid.max_bound = " << join(grid.max_bound) << '\n'
     << "refine.subdivisions = " << refine.subdivisions << '\n'
     << "refine.psw_samples = " << refine.psw_samples << '\n'
     << "bev.x_range = " << fmt(bev.x_min) << ',' << fmt(bev.x_max) << '\n'
     << "bev.y_range = " << fmt(bev.y_min) << ',' << fmt(bev.y_max) << '\n'
     << "bev.resolution = " << fmt(bev.resolution) << '\n'
     << "bev.min_height = " << fmt(bev.min_height) << '\n'
     << "bev.saturation = " << fmt(bev.saturation) << '\n'
     << "voxel_hidden = " << voxel_hidden << '\n'
     << "voxel_width = " << voxel_width << '\n'
     << "head_hidden = " << head_hidden << '\n'
     << "fusion_width = " << fusion_width << '\n'
     << "crop_margin = " << fmt(crop_margin) << '\n'
     << "head_output_gain = " << fmt(head_output_gain) << '\n'
     << "roi_input_scale = " << fmt(roi_input_scale) << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + line + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    set_key(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
  cfg.validate();
  Rng rng(seed);
  const double g = cfg.head_output_gain;
  voxel_net = Mlp({kLidarVoxelAttributes, cfg.voxel_hidden, cfg.voxel_width}, Activation::relu,
                  Activation::identity, rng);
  hpr = HprParams(cfg.hpr, rng);
  stage1_head = DetectionHead(cfg.lidar_feature_width(), cfg.head_hidden, rng, g);
  fusion = Mlp({cfg.pseudo_feature_width() + cfg.lidar_feature_width(), cfg.fusion_width}, Activation::relu,
               Activation::relu, rng);
  stage2_head = DetectionHead(cfg.fusion_width, cfg.head_hidden, rng, g);
  lidar_aux_head = DetectionHead(cfg.lidar_feature_width(), cfg.head_hidden, rng, g);
  pseudo_aux_head = DetectionHead(cfg.pseudo_feature_width(), cfg.head_hidden, rng, g);
  const double s = cfg.roi_input_scale;
  stage1_head.scale_input(s);
  lidar_aux_head.scale_input(s);
  pseudo_aux_head.scale_input(s);
  fusion.scale_input(s);
}

std::vector<ParamTensor> Model::parameters() {
  std::vector<ParamTensor> out;
  voxel_net.collect_parameters(out, "voxel_net");
  hpr.collect_parameters(out, "hpr");
  stage1_head.collect_parameters(out, "stage1_head");
  fusion.collect_parameters(out, "fusion");
  stage2_head.collect_parameters(out, "stage2_head");
  lidar_aux_head.collect_parameters(out, "lidar_aux_head");
  pseudo_aux_head.collect_parameters(out, "pseudo_aux_head");
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value.size();
  return n;
}

void Model::zero_grad() {
  voxel_net.zero_grad();
  hpr.zero_grad();
  stage1_head.zero_grad();
  fusion.zero_grad();
  stage2_head.zero_grad();
  lidar_aux_head.zero_grad();
  pseudo_aux_head.zero_grad();
}

VoxelGrid lidar_feature_grid(const Model& model, std::span<const kitti::LidarPoint> points) {
  return extract_spatial_features(points, model.config.grid, model.voxel_net);
}

VoxelGrid pseudo_feature_grid(const Model& model, const PseudoCloud& cloud, std::span<const Detection> rois) {
  std::vector<Box3D> boxes;
  boxes.reserve(rois.size());
  for (const auto& d : rois) boxes.push_back(d.box);
  const PseudoCloud crop = crop_rois(cloud, boxes, model.config.crop_margin);
  const HprFeatures encoded = hpr_encode(crop, model.config.hpr, model.hpr);
  std::vector<Vec3> positions;
  positions.reserve(crop.size());
  for (const auto& p : crop.points) positions.push_back(p.position());
  return voxelize_features(positions, encoded.features, model.config.grid);
}

std::vector<kitti::LidarPoint> merge_points(std::span<const kitti::LidarPoint> real, const PseudoCloud& pseudo) {
  std::vector<kitti::LidarPoint> out(real.begin(), real.end());
  out.reserve(real.size() + pseudo.size());
  for (const auto& p : pseudo.points) {
    out.push_back({static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z), 0.0f});
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, Model& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(os, kCheckpointVersion);
  put_string(os, model.config.to_text());
  const auto params = model.parameters();
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_string(os, p.name);
    put_u64(os, p.value.size());
    os.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.value.size_bytes()));
  }
  if (!os) throw Error("failed writing '" + path.string() + "'");
}

Model load_checkpoint(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + where + "'");
  Reader r{where, is};
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw FormatError(where, "not a checkpoint");
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw FormatError(where, "unsupported checkpoint version " + std::to_string(v));
  }
  Model model(ModelConfig::from_text(r.str()), 0);
  auto params = model.parameters();
  if (r.u32() != params.size()) throw FormatError(where, "tensor count does not match the config");
  for (auto& p : params) {
    const std::string name = r.str();
    if (name != p.name) throw FormatError(where, "expected tensor '" + p.name + "', found '" + name + "'");
    if (r.u64() != p.value.size()) throw FormatError(where, "size mismatch for tensor '" + name + "'");
    r.raw(p.value.data(), p.value.size_bytes());
  }
  return model;
}

}  // namespace ldr
