#include "meshsplat/avatar.hpp"

#include "meshsplat/blend.hpp"
#include "meshsplat/blobfile.hpp"
#include "meshsplat/errors.hpp"
#include "meshsplat/image_io.hpp"
#include "meshsplat/ply.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace meshsplat {

namespace {

using nlohmann::json;

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw IoError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << j.dump(2) << "\n";
}

template <typename T>
void write_raw(std::ofstream& out, const std::vector<T>& data) {
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
}

template <typename T>
std::vector<T> read_raw(std::ifstream& in, std::size_t n) {
  std::vector<T> data(n);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw IoError("head model file truncated");
  return data;
}

void put_image(BlobFile& blob, const std::string& name, const Image& img) {
  blob.put(name, img.data(), {img.height(), img.width(), img.channels()});
}

Image get_image(const BlobFile& blob, const std::string& name) {
  const auto& shape = blob.shape(name);
  if (shape.size() != 3) throw IoError("blob " + name + " is not an image");
  Image img(static_cast<int>(shape[1]), static_cast<int>(shape[0]), static_cast<int>(shape[2]));
  img.data() = blob.get(name);
  return img;
}

}  // namespace

void save_head_model(const std::filesystem::path& path, const HeadModel& model) {
  model.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_head_model: cannot open " + path.string());
  const int nv = model.vertex_count();
  const int nf = static_cast<int>(model.faces.size());
  const int nj = model.joint_count();
  out << "MSHEAD 1\n"
      << nv << " " << nf << " " << model.shape_dim() << " " << model.expr_dim() << " " << nj << " "
      << model.scalp_indices.size() << "\n";

  std::vector<float> f32;
  auto push_vec3 = [&f32](const Vec3& v) {
    f32.push_back(static_cast<float>(v.x()));
    f32.push_back(static_cast<float>(v.y()));
    f32.push_back(static_cast<float>(v.z()));
  };
  f32.clear();
  for (const Vec3& v : model.template_vertices) push_vec3(v);
  write_raw(out, f32);
  f32.clear();
  for (const Vec2& uv : model.uv_coords) {
    f32.push_back(static_cast<float>(uv.x()));
    f32.push_back(static_cast<float>(uv.y()));
  }
  write_raw(out, f32);
  std::vector<std::int32_t> i32;
  for (const Face& f : model.faces) {
    i32.push_back(f[0]);
    i32.push_back(f[1]);
    i32.push_back(f[2]);
  }
  write_raw(out, i32);
  f32.clear();
  for (const auto& basis : model.shape_basis) {
    for (const Vec3& v : basis) push_vec3(v);
  }
  write_raw(out, f32);
  f32.clear();
  for (const auto& basis : model.expr_basis) {
    for (const Vec3& v : basis) push_vec3(v);
  }
  write_raw(out, f32);
  f32.clear();
  for (const Joint& j : model.joints) push_vec3(j.rest_position);
  write_raw(out, f32);
  i32.clear();
  for (const Joint& j : model.joints) i32.push_back(j.parent);
  write_raw(out, i32);
  f32.clear();
  for (int i = 0; i < nv; ++i) {
    for (int j = 0; j < nj; ++j) f32.push_back(static_cast<float>(model.skin_weights(i, j)));
  }
  write_raw(out, f32);
  i32.assign(model.scalp_indices.begin(), model.scalp_indices.end());
  write_raw(out, i32);
  if (!out) throw IoError("save_head_model: write failed for " + path.string());
}

HeadModel load_head_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_head_model: cannot open " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "MSHEAD" || version != 1) {
    throw IoError("load_head_model: bad header in " + path.string());
  }
  int nv, nf, ns, ne, nj, nscalp;
  in >> nv >> nf >> ns >> ne >> nj >> nscalp;
  in.get();  // newline before binary payload

  HeadModel model;
  {
    const auto data = read_raw<float>(in, static_cast<std::size_t>(nv) * 3);
    model.template_vertices.resize(nv);
    for (int i = 0; i < nv; ++i) {
      model.template_vertices[i] = Vec3(data[i * 3], data[i * 3 + 1], data[i * 3 + 2]);
    }
  }
  {
    const auto data = read_raw<float>(in, static_cast<std::size_t>(nv) * 2);
    model.uv_coords.resize(nv);
    for (int i = 0; i < nv; ++i) model.uv_coords[i] = Vec2(data[i * 2], data[i * 2 + 1]);
  }
  {
    const auto data = read_raw<std::int32_t>(in, static_cast<std::size_t>(nf) * 3);
    model.faces.resize(nf);
    for (int i = 0; i < nf; ++i) model.faces[i] = {data[i * 3], data[i * 3 + 1], data[i * 3 + 2]};
  }
  auto read_basis = [&](int n_basis) {
    std::vector<std::vector<Vec3>> basis(n_basis, std::vector<Vec3>(nv));
    const auto data = read_raw<float>(in, static_cast<std::size_t>(n_basis) * nv * 3);
    for (int b = 0; b < n_basis; ++b) {
      for (int i = 0; i < nv; ++i) {
        const std::size_t o = (static_cast<std::size_t>(b) * nv + i) * 3;
        basis[b][i] = Vec3(data[o], data[o + 1], data[o + 2]);
      }
    }
    return basis;
  };
  model.shape_basis = read_basis(ns);
  model.expr_basis = read_basis(ne);
  {
    const auto rest = read_raw<float>(in, static_cast<std::size_t>(nj) * 3);
    const auto parents = read_raw<std::int32_t>(in, nj);
    model.joints.resize(nj);
    for (int j = 0; j < nj; ++j) {
      model.joints[j].rest_position = Vec3(rest[j * 3], rest[j * 3 + 1], rest[j * 3 + 2]);
      model.joints[j].parent = parents[j];
    }
  }
  {
    const auto data = read_raw<float>(in, static_cast<std::size_t>(nv) * nj);
    model.skin_weights = MatX(nv, nj);
    for (int i = 0; i < nv; ++i) {
      for (int j = 0; j < nj; ++j) model.skin_weights(i, j) = data[static_cast<std::size_t>(i) * nj + j];
    }
  }
  {
    const auto data = read_raw<std::int32_t>(in, nscalp);
    model.scalp_indices.assign(data.begin(), data.end());
  }
  model.validate();
  return model;
}

void put_mlp(BlobFile& blob, const std::string& prefix, const MlpParams& params) {
  std::vector<std::int32_t> acts;
  for (const MlpLayer& l : params.layers) acts.push_back(static_cast<std::int32_t>(l.activation));
  blob.put_ints(prefix + ".activations", acts);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const MlpLayer& l = params.layers[i];
    std::vector<double> w(l.weights.data(), l.weights.data() + l.weights.size());
    blob.put(prefix + ".w" + std::to_string(i), w, {l.weights.rows(), l.weights.cols()});
    std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
    blob.put(prefix + ".b" + std::to_string(i), b, {l.bias.size()});
  }
}

MlpParams get_mlp(const BlobFile& blob, const std::string& prefix) {
  MlpParams params;
  const auto acts = blob.get_ints(prefix + ".activations");
  for (std::size_t i = 0; i < acts.size(); ++i) {
    MlpLayer layer;
    const auto& wshape = blob.shape(prefix + ".w" + std::to_string(i));
    const auto& w = blob.get(prefix + ".w" + std::to_string(i));
    layer.weights = Eigen::Map<const MatX>(w.data(), wshape[0], wshape[1]);
    const auto& b = blob.get(prefix + ".b" + std::to_string(i));
    layer.bias = Eigen::Map<const VecX>(b.data(), static_cast<Eigen::Index>(b.size()));
    layer.activation = static_cast<Activation>(acts[i]);
    params.layers.push_back(std::move(layer));
  }
  params.validate();
  return params;
}

void AvatarBundle::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);

  json manifest;
  manifest["kind"] = "avatar";
  manifest["version"] = 1;
  manifest["sh_coeffs"] = cloud.sh_coeff_count;
  manifest["channels"] = textures.channels;
  manifest["dyn_basis"] = textures.n_dyn_basis;
  write_json_file(dir / "manifest.json", manifest);

  save_head_model(dir / "head_model.bin", head);

  BlobFile tex;
  put_image(tex, "diffuse", textures.diffuse);
  if (textures.has_view()) put_image(tex, "view_coeffs", textures.view_coeffs);
  if (textures.has_dynamic()) put_image(tex, "dyn_basis", textures.dyn_basis);
  tex.save(dir / "textures.bin");

  BlobFile pix_blob;
  put_mlp(pix_blob, "pix", pix);
  pix_blob.save(dir / "pix.bin");

  BlobFile disp;
  if (displacement.enabled()) {
    put_image(disp, "base", displacement.base);
    for (std::size_t k = 0; k < displacement.psi_basis.size(); ++k) {
      put_image(disp, "psi" + std::to_string(k), displacement.psi_basis[k]);
    }
    for (std::size_t k = 0; k < displacement.phi_basis.size(); ++k) {
      put_image(disp, "phi" + std::to_string(k), displacement.phi_basis[k]);
    }
  }
  disp.save(dir / "displacement.bin");

  write_cloud_ply(dir / "cloud.ply", cloud);

  BlobFile field_blob;
  put_mlp(field_blob, "field", field.mlp);
  {
    std::vector<double> emb(field.embeddings.data(),
                            field.embeddings.data() + field.embeddings.size());
    field_blob.put("embeddings", emb, {field.embeddings.rows(), field.embeddings.cols()});
  }
  field_blob.save(dir / "field.bin");

  json transforms;
  for (const auto& [frame, t] : frame_transforms) {
    std::vector<double> vals;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) vals.push_back(t.rotation(r, c));
    }
    for (int c = 0; c < 3; ++c) vals.push_back(t.translation[c]);
    if (t.scale != 1.0) vals.push_back(t.scale);
    transforms[std::to_string(frame)] = vals;
  }
  write_json_file(dir / "transforms.json", transforms);
  config.save(dir / "config.json");
}

AvatarBundle AvatarBundle::load(const std::filesystem::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  if (manifest.value("kind", "") != "avatar") {
    throw IoError("AvatarBundle::load: not an avatar directory: " + dir.string());
  }

  AvatarBundle a;
  a.head = load_head_model(dir / "head_model.bin");

  const BlobFile tex = BlobFile::load(dir / "textures.bin");
  a.textures.channels = manifest.value("channels", 4);
  a.textures.n_dyn_basis = manifest.value("dyn_basis", 0);
  a.textures.diffuse = get_image(tex, "diffuse");
  if (tex.has("view_coeffs")) a.textures.view_coeffs = get_image(tex, "view_coeffs");
  if (tex.has("dyn_basis")) a.textures.dyn_basis = get_image(tex, "dyn_basis");
  a.textures.validate();

  a.pix = get_mlp(BlobFile::load(dir / "pix.bin"), "pix");

  const BlobFile disp = BlobFile::load(dir / "displacement.bin");
  if (disp.has("base")) {
    a.displacement.base = get_image(disp, "base");
    for (int k = 0; disp.has("psi" + std::to_string(k)); ++k) {
      a.displacement.psi_basis.push_back(get_image(disp, "psi" + std::to_string(k)));
    }
    for (int k = 0; disp.has("phi" + std::to_string(k)); ++k) {
      a.displacement.phi_basis.push_back(get_image(disp, "phi" + std::to_string(k)));
    }
  }

  a.cloud = read_cloud_ply(dir / "cloud.ply");

  const BlobFile field_blob = BlobFile::load(dir / "field.bin");
  a.field.mlp = get_mlp(field_blob, "field");
  {
    const auto& shape = field_blob.shape("embeddings");
    const auto& emb = field_blob.get("embeddings");
    a.field.embeddings = Eigen::Map<const MatX>(emb.data(), shape[0], shape[1]);
  }

  const json transforms = read_json_file(dir / "transforms.json");
  for (const auto& [key, vals] : transforms.items()) {
    RigidTransform t;
    const std::vector<double> v = vals.get<std::vector<double>>();
    if (v.size() != 12 && v.size() != 13) throw IoError("transforms.json: bad entry " + key);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) t.rotation(r, c) = v[static_cast<std::size_t>(r) * 3 + c];
    }
    t.translation = Vec3(v[9], v[10], v[11]);
    if (v.size() == 13) t.scale = v[12];
    a.frame_transforms[std::stoi(key)] = t;
  }
  a.config = TrainConfig::load(dir / "config.json");
  return a;
}

AvatarBundle AvatarBundle::initialize(const HeadModel& head, const TrainConfig& config,
                                      int n_gaussians, double shell, int sh_coeff_count,
                                      int texture_res, int model_res, int dyn_basis,
                                      int disp_res) {
  AvatarBundle a;
  a.head = head;
  a.config = config;
  a.textures = TextureStack::zeros(texture_res, model_res, 4, dyn_basis);
  a.displacement = DisplacementModel::zeros(disp_res, std::min(4, head.expr_dim()),
                                            std::min(4, head.pose_dim()));
  Rng rng(config.seed);
  // Zeroed final layer + sigmoid output: the initial face decodes to 0.5 gray.
  a.pix = MlpParams::make({a.textures.channels + 2, 16, 16, 3},
                          {Activation::Relu, Activation::Relu, Activation::Sigmoid}, rng,
                          /*zero_last=*/true);
  const TriMesh rest = lbs_deform(head, ExpressionParams::zeros(head));
  a.cloud = init_from_scalp(rest, head.scalp_indices, n_gaussians, shell, config.seed,
                            sh_coeff_count);
  a.field = DeformationField::make(n_gaussians, sh_coeff_count, 64, config.seed + 1);
  return a;
}

RigidTransform frame_rigid(const AvatarBundle& avatar, int frame_id) {
  const auto it = avatar.frame_transforms.find(frame_id);
  return it == avatar.frame_transforms.end() ? RigidTransform{} : it->second;
}

SplatOptions splat_options_for(const AvatarBundle& avatar, const RenderSettings& settings) {
  SplatOptions opts;
  opts.nearz_opacity_threshold = settings.nearz_threshold;
  opts.early_stop = settings.early_stop;
  opts.use_nearz = settings.use_nearz;
  double extent = 0.0;
  if (!avatar.head.template_vertices.empty()) {
    Vec3 lo = avatar.head.template_vertices.front();
    Vec3 hi = lo;
    for (const Vec3& v : avatar.head.template_vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    extent = (hi - lo).norm();
  }
  opts.early_stop_gap = extent > 0.0 ? 0.5 * extent : 0.1;
  return opts;
}

FrameRender render_frame(const AvatarBundle& avatar, const ExpressionParams& params,
                         const Camera& camera, const RigidTransform& rigid,
                         const RenderSettings& settings) {
  FrameRender out;
  const TriMesh posed = lbs_deform(avatar.head, params);
  TriMesh refined = posed;
  if (avatar.displacement.enabled()) {
    refined = apply_displacement(posed, avatar.displacement.evaluate(params.psi, params.phi));
  }
  out.mesh = rasterize(refined, camera);
  const Image dirs = view_direction_image(camera, out.mesh);
  out.head_color = decode_face(avatar.textures, out.mesh, dirs, params.psi, avatar.pix);

  const GaussianCloud deformed = deform_cloud(avatar.cloud, rigid, params.psi, avatar.field);
  const SplatOptions opts = splat_options_for(avatar, settings);
  out.hair = render_splats(deformed, camera, opts);

  const Image& occ_source = settings.use_nearz ? out.hair.nearz : out.hair.acc_depth;
  const BlendMaps maps =
      make_blend_maps(occ_source, out.mesh.depth, out.hair.alpha, settings.blur_sigma);
  out.occlusion = maps.occlusion;
  out.soft_mask = maps.soft_mask;
  out.hair_blend = maps.hair_blend;
  out.composite_color = composite(out.hair.color, out.head_color, out.hair.alpha, out.soft_mask);
  return out;
}

// ---------------------------------------------------------------------------
// Scene dataset.

namespace {

std::filesystem::path frame_dir(const std::filesystem::path& root, int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%03d", frame);
  return root / "frames" / buf;
}

std::string view_stem(int view) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%02d", view);
  return buf;
}

}  // namespace

SceneDataset SceneDataset::open(const std::filesystem::path& root) {
  SceneDataset ds;
  ds.root = root;
  const json manifest = read_json_file(root / "manifest.json");
  if (manifest.value("kind", "") != "scene") {
    throw ConfigError("SceneDataset: not a scene directory: " + root.string());
  }
  ds.canonical_frame = manifest.value("canonical_frame", 0);
  ds.image_size = manifest.value("image_size", 128);
  if (manifest.contains("held_out")) {
    ds.held_out_frame = manifest["held_out"].value("frame", -1);
    ds.held_out_view = manifest["held_out"].value("view", -1);
  }

  const json cams = read_json_file(root / "cameras.json");
  for (const auto& c : cams) {
    Camera cam;
    cam.fx = c.at("fx");
    cam.fy = c.at("fy");
    cam.cx = c.at("cx");
    cam.cy = c.at("cy");
    cam.width = c.at("width");
    cam.height = c.at("height");
    cam.near_clip = c.value("near", 1e-3);
    cam.far_clip = c.value("far", 1e3);
    const std::vector<double> r = c.at("rotation").get<std::vector<double>>();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) cam.rotation(i, j) = r[static_cast<std::size_t>(i) * 3 + j];
    }
    const std::vector<double> t = c.at("translation").get<std::vector<double>>();
    cam.translation = Vec3(t[0], t[1], t[2]);
    cam.validate();
    ds.cameras.push_back(cam);
  }

  const int n_frames = manifest.value("n_frames", 0);
  for (int f = 0; f < n_frames; ++f) {
    const json p = read_json_file(frame_dir(root, f) / "params.json");
    ExpressionParams params;
    const auto beta = p.at("beta").get<std::vector<double>>();
    const auto psi = p.at("psi").get<std::vector<double>>();
    const auto phi = p.at("phi").get<std::vector<double>>();
    params.beta = Eigen::Map<const VecX>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    params.psi = Eigen::Map<const VecX>(psi.data(), static_cast<Eigen::Index>(psi.size()));
    params.phi = Eigen::Map<const VecX>(phi.data(), static_cast<Eigen::Index>(phi.size()));
    ds.frame_params.push_back(std::move(params));
  }
  return ds;
}

FrameRecord SceneDataset::load_record(int frame, int view) const {
  if (frame < 0 || frame >= frame_count() || view < 0 || view >= view_count()) {
    throw ParameterError("SceneDataset::load_record: frame/view out of range");
  }
  FrameRecord rec;
  rec.frame_id = frame;
  rec.view_id = view;
  rec.camera = cameras[view];
  rec.params = frame_params[frame];
  const auto dir = frame_dir(root, frame);
  const std::string stem = view_stem(view);
  rec.image_full = read_png(dir / (stem + "_full.png"));
  rec.image_head = read_png(dir / (stem + "_head.png"));
  rec.image_hair = read_png(dir / (stem + "_hair.png"));
  rec.mask_hair = read_png(dir / (stem + "_hairmask.png"));
  rec.mask_coverage = read_png(dir / (stem + "_coverage.png"));
  rec.depth = read_pfm(dir / (stem + "_depth.pfm"));
  return rec;
}

std::vector<std::pair<int, int>> SceneDataset::all_pairs(bool skip_held_out) const {
  std::vector<std::pair<int, int>> pairs;
  for (int f = 0; f < frame_count(); ++f) {
    for (int v = 0; v < view_count(); ++v) {
      if (skip_held_out && f == held_out_frame && v == held_out_view) continue;
      pairs.emplace_back(f, v);
    }
  }
  return pairs;
}

}  // namespace meshsplat
