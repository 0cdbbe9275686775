#include "meshsplat/avatar.hpp"
#include "meshsplat/blobfile.hpp"
#include "meshsplat/config.hpp"
#include "meshsplat/errors.hpp"
#include "meshsplat/image_io.hpp"
#include "meshsplat/ply.hpp"
#include "meshsplat/synthetic.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace meshsplat;
using namespace meshsplat::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("png round-trips 8-bit values exactly") {
  TempDir dir("meshsplat_png_test");
  Rng rng(1);
  Image img(13, 9, 3);
  for (double& v : img.data()) v = rng.uniform();
  const Image quantized = quantize8(img);
  write_png(dir.path / "t.png", img);
  const Image back = read_png(dir.path / "t.png");
  CHECK(back == quantized);

  Image gray(7, 5, 1);
  for (double& v : gray.data()) v = rng.uniform();
  write_png(dir.path / "g.png", gray);
  CHECK(read_png(dir.path / "g.png") == quantize8(gray));
}

TEST_CASE("pfm round-trips float32 depth maps including infinities") {
  TempDir dir("meshsplat_pfm_test");
  Image depth(6, 4, 1);
  Rng rng(2);
  for (double& v : depth.data()) v = 1.0 + rng.uniform();
  depth.at(3, 2) = kInf;
  write_pfm(dir.path / "d.pfm", depth);
  const Image back = read_pfm(dir.path / "d.pfm");
  CHECK(back.at(3, 2) == kInf);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const float f = static_cast<float>(depth.data()[i]);
    CHECK(back.data()[i] == static_cast<double>(f));
  }
}

TEST_CASE("blob container round-trips doubles exactly, f4 rounds") {
  TempDir dir("meshsplat_blob_test");
  BlobFile blob;
  Rng rng(3);
  std::vector<double> values;
  for (int i = 0; i < 17; ++i) values.push_back(rng.normal());
  blob.put("weights", values, {17});
  blob.put_ints("dims", {3, 5, 7});
  blob.put_f32("compact", values, {17});
  blob.save(dir.path / "b.bin");

  const BlobFile back = BlobFile::load(dir.path / "b.bin");
  CHECK(back.get("weights") == values);
  CHECK(back.get_ints("dims") == std::vector<std::int32_t>{3, 5, 7});
  for (std::size_t i = 0; i < values.size(); ++i) {
    CHECK(back.get("compact")[i] == static_cast<double>(static_cast<float>(values[i])));
  }
  CHECK_THROWS_AS(back.get("missing"), IoError);
}

TEST_CASE("head model file round-trips through float32 storage") {
  TempDir dir("meshsplat_head_test");
  SyntheticOptions opts;
  const HeadModel model = make_sphere_head(opts);
  save_head_model(dir.path / "head.bin", model);
  const HeadModel back = load_head_model(dir.path / "head.bin");
  CHECK(back.vertex_count() == model.vertex_count());
  CHECK(back.faces == model.faces);
  CHECK(back.scalp_indices == model.scalp_indices);
  CHECK(back.shape_dim() == model.shape_dim());
  CHECK(back.expr_dim() == model.expr_dim());
  // Values round to float32 (validate() already checked weight row sums).
  for (int i = 0; i < model.vertex_count(); ++i) {
    for (int c = 0; c < 3; ++c) {
      CHECK(back.template_vertices[i][c] ==
            static_cast<double>(static_cast<float>(model.template_vertices[i][c])));
    }
  }
  // A second save/load is the fixed point.
  save_head_model(dir.path / "head2.bin", back);
  const HeadModel again = load_head_model(dir.path / "head2.bin");
  for (int i = 0; i < back.vertex_count(); ++i) {
    CHECK(again.template_vertices[i] == back.template_vertices[i]);
  }
}

TEST_CASE("cloud PLY round-trips exactly with community attribute names") {
  TempDir dir("meshsplat_ply_test");
  const GaussianCloud cloud = random_cloud(23, 4, 7);
  write_cloud_ply(dir.path / "c.ply", cloud);
  const GaussianCloud back = read_cloud_ply(dir.path / "c.ply");
  CHECK(back.size() == cloud.size());
  CHECK(back.sh_coeff_count == cloud.sh_coeff_count);
  CHECK(back.centers == cloud.centers);
  CHECK(back.rotations == cloud.rotations);
  CHECK(back.log_scales == cloud.log_scales);
  CHECK(back.opacity_logits == cloud.opacity_logits);
  CHECK(back.sh == cloud.sh);

  // Header carries the expected property names.
  std::ifstream in(dir.path / "c.ply");
  std::string header((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (const char* name : {"property double x", "rot_0", "scale_2", "opacity", "f_dc_0",
                           "f_rest_8"}) {
    CHECK(header.find(name) != std::string::npos);
  }
}

TEST_CASE("mlp blob round-trip preserves layers and activations") {
  TempDir dir("meshsplat_mlp_test");
  Rng rng(9);
  const MlpParams p = MlpParams::make({5, 8, 3}, {Activation::Relu, Activation::Sigmoid}, rng);
  BlobFile blob;
  put_mlp(blob, "net", p);
  blob.save(dir.path / "net.bin");
  const MlpParams back = get_mlp(BlobFile::load(dir.path / "net.bin"), "net");
  REQUIRE(back.layers.size() == p.layers.size());
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    CHECK(back.layers[i].weights == p.layers[i].weights);
    CHECK(back.layers[i].bias == p.layers[i].bias);
    CHECK(back.layers[i].activation == p.layers[i].activation);
  }
}

TEST_CASE("config JSON survives a round trip") {
  TrainConfig cfg;
  cfg.iters_face = 123;
  cfg.weights.silhouette = 0.5;
  cfg.lr_field = 3e-5;
  cfg.use_nearz = false;
  cfg.seed = 99;
  const TrainConfig back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.iters_face == 123);
  CHECK(back.weights.silhouette == 0.5);
  CHECK(back.lr_field == 3e-5);
  CHECK(back.use_nearz == false);
  CHECK(back.seed == 99);
  CHECK_THROWS_AS(TrainConfig::from_json("{nope"), ConfigError);
}

TEST_CASE("avatar bundle save/load/re-render is bit-identical") {
  TempDir dir("meshsplat_avatar_test");
  SyntheticOptions opts;
  opts.n_gaussians = 120;
  opts.image_size = 64;
  const HeadModel head = make_sphere_head(opts);
  AvatarBundle avatar = make_ground_truth_avatar(head, opts);
  avatar.frame_transforms[0] = RigidTransform{};

  // Normalize through one save/load (head model storage is float32).
  avatar.save(dir.path / "a");
  const AvatarBundle first = AvatarBundle::load(dir.path / "a");

  const ExpressionParams params = make_frame_params(first.head, opts, 2);
  const Camera cam = make_camera_ring(opts)[1];
  const RenderSettings settings;
  const FrameRender r1 = render_frame(first, params, cam, RigidTransform{}, settings);

  first.save(dir.path / "b");
  const AvatarBundle second = AvatarBundle::load(dir.path / "b");
  const FrameRender r2 = render_frame(second, params, cam, RigidTransform{}, settings);

  CHECK(r1.composite_color == r2.composite_color);
  CHECK(r1.mesh.depth == r2.mesh.depth);
  CHECK(r1.hair.alpha == r2.hair.alpha);
  CHECK(r1.hair_blend == r2.hair_blend);
}

TEST_SUITE_END();
