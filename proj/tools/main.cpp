// meshsplat: hybrid mesh + Gaussian-splat head avatar toolkit.
//
// Subcommands: gen-synthetic, render, train-face, train-hair, train-joint,
// swap-hair, edit-texture, eval, dump-blend-maps.

#include "meshsplat/avatar.hpp"
#include "meshsplat/blend.hpp"
#include "meshsplat/errors.hpp"
#include "meshsplat/image_io.hpp"
#include "meshsplat/metrics.hpp"
#include "meshsplat/synthetic.hpp"
#include "meshsplat/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

namespace fs = std::filesystem;
using namespace meshsplat;

namespace {

// Removes everything this invocation created if it fails partway.
class OutputGuard {
 public:
  void track(const fs::path& path) { created_.push_back(path); }
  void track_dir(const fs::path& path) {
    if (!fs::exists(path)) fresh_dirs_.push_back(path);
  }
  void commit() { created_.clear(); fresh_dirs_.clear(); }
  ~OutputGuard() {
    std::error_code ec;
    for (const auto& p : created_) fs::remove(p, ec);
    for (const auto& p : fresh_dirs_) fs::remove_all(p, ec);
  }

 private:
  std::vector<fs::path> created_;
  std::vector<fs::path> fresh_dirs_;
};

TrainConfig load_config_or_default(const std::string& config_path, std::uint64_t seed,
                                   int iters, const std::string& blend_mode,
                                   const std::string& early_stop) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = TrainConfig::load(config_path);
  if (seed != 0) cfg.seed = seed;
  if (iters > 0) {
    cfg.iters_face = iters;
    cfg.iters_hair = iters;
    cfg.iters_joint = iters;
  }
  if (blend_mode == "nearz") cfg.use_nearz = true;
  else if (blend_mode == "gsdepth") cfg.use_nearz = false;
  else if (!blend_mode.empty()) throw ConfigError("unknown --blend-mode: " + blend_mode);
  if (early_stop == "on") cfg.early_stop = true;
  else if (early_stop == "off") cfg.early_stop = false;
  else if (!early_stop.empty()) throw ConfigError("unknown --early-stop: " + early_stop);
  return cfg;
}

RenderSettings settings_from_config(const TrainConfig& cfg) {
  RenderSettings s;
  s.use_nearz = cfg.use_nearz;
  s.early_stop = cfg.early_stop;
  s.blur_sigma = cfg.blur_sigma;
  s.nearz_threshold = cfg.nearz_threshold;
  return s;
}

std::vector<int> parse_int_list(const std::string& text, int upper) {
  std::vector<int> out;
  if (text.empty()) {
    for (int i = 0; i < upper; ++i) out.push_back(i);
    return out;
  }
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

AvatarBundle fresh_avatar_for_scene(const SceneDataset& scene, const TrainConfig& cfg,
                                    int n_gaussians) {
  const HeadModel head = load_head_model(scene.root / "avatar" / "head_model.bin");
  return AvatarBundle::initialize(head, cfg, n_gaussians, 0.02, 4, 128, 64, 3, 32);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid mesh + Gaussian-splat head avatar toolkit"};
  app.require_subcommand(1);

  // ---- gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic scene + ground-truth avatar");
  std::string gen_out;
  SyntheticOptions gen_opts;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_opts.seed, "RNG seed");
  gen->add_option("--views", gen_opts.n_views, "Number of ring cameras");
  gen->add_option("--frames", gen_opts.n_frames, "Number of frames");
  gen->add_option("--size", gen_opts.image_size, "Image size (square)");
  gen->add_option("--gaussians", gen_opts.n_gaussians, "Hair Gaussian count");
  gen->add_option("--field-amplitude", gen_opts.field_amplitude, "GT deformation strength");
  gen->add_option("--hair-opacity-lo", gen_opts.hair_opacity_lo, "Min GT hair opacity");
  gen->add_option("--hair-opacity-hi", gen_opts.hair_opacity_hi, "Max GT hair opacity");
  bool gen_no_disp = false;
  gen->add_flag("--no-displacement", gen_no_disp, "Disable the GT displacement model");

  // ---- render
  auto* render_cmd = app.add_subcommand("render", "Render one frame of an avatar");
  std::string r_avatar, r_scene, r_out, r_blend, r_early;
  int r_frame = 0, r_view = 0;
  bool r_dump = false;
  render_cmd->add_option("--avatar", r_avatar)->required();
  render_cmd->add_option("--scene", r_scene)->required();
  render_cmd->add_option("--frame", r_frame);
  render_cmd->add_option("--view", r_view);
  render_cmd->add_option("--out", r_out, "Output PNG")->required();
  render_cmd->add_option("--blend-mode", r_blend, "nearz|gsdepth");
  render_cmd->add_option("--early-stop", r_early, "on|off");
  render_cmd->add_flag("--dump-buffers", r_dump, "Also write depth/alpha/mask buffers");

  // ---- train-*
  struct TrainArgs {
    std::string scene, avatar_in, out, config, log, blend, early;
    std::uint64_t seed = 0;
    int iters = 0;
    int gaussians = 400;
  };
  TrainArgs tf, th, tj;
  auto add_train_options = [](CLI::App* cmd, TrainArgs& a, bool with_avatar_in) {
    cmd->add_option("--scene", a.scene)->required();
    cmd->add_option("--out", a.out, "Output avatar directory")->required();
    if (with_avatar_in) cmd->add_option("--avatar", a.avatar_in, "Input avatar directory");
    cmd->add_option("--config", a.config, "Config JSON path");
    cmd->add_option("--seed", a.seed);
    cmd->add_option("--iters", a.iters);
    cmd->add_option("--log", a.log, "Training log CSV");
    cmd->add_option("--blend-mode", a.blend, "nearz|gsdepth");
    cmd->add_option("--early-stop", a.early, "on|off");
  };
  auto* face_cmd = app.add_subcommand("train-face", "Stage 1: facial mesh optimization");
  add_train_options(face_cmd, tf, true);
  face_cmd->add_option("--gaussians", tf.gaussians, "Cloud size for fresh avatars");
  auto* hair_cmd = app.add_subcommand("train-hair", "Stage 2: canonical hair optimization");
  add_train_options(hair_cmd, th, true);
  auto* joint_cmd = app.add_subcommand("train-joint", "Stage 3: joint optimization");
  add_train_options(joint_cmd, tj, true);

  // ---- swap-hair
  auto* swap_cmd = app.add_subcommand("swap-hair", "Recompose a face avatar with donor hair");
  std::string s_face, s_hair, s_out;
  swap_cmd->add_option("--face-avatar", s_face)->required();
  swap_cmd->add_option("--hair-avatar", s_hair)->required();
  swap_cmd->add_option("--out", s_out)->required();

  // ---- edit-texture
  auto* edit_cmd = app.add_subcommand("edit-texture", "Paint-based diffuse texture edit");
  std::string e_scene, e_avatar, e_paint, e_mask, e_out;
  int e_frame = 0, e_view = 0, e_steps = 500, e_reg_views = 2;
  edit_cmd->add_option("--scene", e_scene)->required();
  edit_cmd->add_option("--avatar", e_avatar)->required();
  edit_cmd->add_option("--paint", e_paint, "Painted image PNG")->required();
  edit_cmd->add_option("--mask", e_mask, "Painting mask PNG")->required();
  edit_cmd->add_option("--frame", e_frame);
  edit_cmd->add_option("--view", e_view);
  edit_cmd->add_option("--steps", e_steps);
  edit_cmd->add_option("--reg-views", e_reg_views, "Number of regularization views");
  edit_cmd->add_option("--out", e_out)->required();

  // ---- eval
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM/depth-MAE tables");
  std::string v_scene, v_avatar, v_out, v_views, v_frames, v_blend, v_early;
  eval_cmd->add_option("--scene", v_scene)->required();
  eval_cmd->add_option("--avatar", v_avatar)->required();
  eval_cmd->add_option("--out", v_out, "Output CSV")->required();
  eval_cmd->add_option("--views", v_views, "Comma-separated view list");
  eval_cmd->add_option("--frames", v_frames, "Comma-separated frame list");
  eval_cmd->add_option("--blend-mode", v_blend, "nearz|gsdepth");
  eval_cmd->add_option("--early-stop", v_early, "on|off");

  // ---- dump-blend-maps
  auto* dump_cmd = app.add_subcommand("dump-blend-maps", "Write M_o, G(M_o), A_hat as PNGs");
  std::string d_scene, d_avatar, d_out, d_blend, d_early;
  int d_frame = 0, d_view = 0;
  dump_cmd->add_option("--scene", d_scene)->required();
  dump_cmd->add_option("--avatar", d_avatar)->required();
  dump_cmd->add_option("--frame", d_frame);
  dump_cmd->add_option("--view", d_view);
  dump_cmd->add_option("--out", d_out, "Output directory")->required();
  dump_cmd->add_option("--blend-mode", d_blend, "nearz|gsdepth");
  dump_cmd->add_option("--early-stop", d_early, "on|off");

  CLI11_PARSE(app, argc, argv);

  try {
    OutputGuard guard;

    if (gen->parsed()) {
      gen_opts.displacement_on = !gen_no_disp;
      guard.track_dir(gen_out);
      generate_scene(gen_out, gen_opts);
      guard.commit();
      std::cout << "scene written to " << gen_out << "\n";
      return 0;
    }

    if (render_cmd->parsed()) {
      const SceneDataset scene = SceneDataset::open(r_scene);
      const AvatarBundle avatar = AvatarBundle::load(r_avatar);
      TrainConfig cfg = avatar.config;
      if (r_blend == "nearz") cfg.use_nearz = true;
      else if (r_blend == "gsdepth") cfg.use_nearz = false;
      if (r_early == "on") cfg.early_stop = true;
      else if (r_early == "off") cfg.early_stop = false;
      const FrameRender out =
          render_frame(avatar, scene.frame_params.at(r_frame), scene.cameras.at(r_view),
                       frame_rigid(avatar, r_frame), settings_from_config(cfg));
      guard.track(r_out);
      write_png(r_out, out.composite_color);
      if (r_dump) {
        const fs::path base = fs::path(r_out).parent_path();
        const std::string stem = fs::path(r_out).stem().string();
        for (const auto& [suffix, img] :
             std::vector<std::pair<std::string, const Image*>>{{"_head.png", &out.head_color},
                                                               {"_hair.png", &out.hair.color},
                                                               {"_alpha.png", &out.hair.alpha},
                                                               {"_mask.png", &out.hair_blend}}) {
          guard.track(base / (stem + suffix));
          write_png(base / (stem + suffix), *img);
        }
        guard.track(base / (stem + "_depth.pfm"));
        write_pfm(base / (stem + "_depth.pfm"), out.mesh.depth);
      }
      guard.commit();
      return 0;
    }

    if (face_cmd->parsed()) {
      const SceneDataset scene = SceneDataset::open(tf.scene);
      TrainConfig cfg = load_config_or_default(tf.config, tf.seed, tf.iters, tf.blend, tf.early);
      AvatarBundle avatar = tf.avatar_in.empty() ? fresh_avatar_for_scene(scene, cfg, tf.gaussians)
                                                 : AvatarBundle::load(tf.avatar_in);
      avatar.config = cfg;
      guard.track_dir(tf.out);
      const FaceTrainSummary s = train_face(scene, avatar, cfg,
                                            tf.log.empty() ? fs::path{} : fs::path(tf.log));
      avatar.save(tf.out);
      guard.commit();
      std::cout << "train-face: psnr=" << s.psnr << " ssim=" << s.ssim
                << " depth_mae=" << s.depth_mae << "\n";
      return 0;
    }

    if (hair_cmd->parsed()) {
      const SceneDataset scene = SceneDataset::open(th.scene);
      TrainConfig cfg = load_config_or_default(th.config, th.seed, th.iters, th.blend, th.early);
      if (th.avatar_in.empty()) throw ConfigError("train-hair: --avatar (stage-1 output) required");
      AvatarBundle avatar = AvatarBundle::load(th.avatar_in);
      avatar.config = cfg;
      guard.track_dir(th.out);
      const HairTrainSummary s = train_hair(scene, avatar, cfg,
                                            th.log.empty() ? fs::path{} : fs::path(th.log));
      avatar.save(th.out);
      guard.commit();
      std::cout << "train-hair: psnr=" << s.psnr << " gaussians=" << s.gaussians << "\n";
      return 0;
    }

    if (joint_cmd->parsed()) {
      const SceneDataset scene = SceneDataset::open(tj.scene);
      TrainConfig cfg = load_config_or_default(tj.config, tj.seed, tj.iters, tj.blend, tj.early);
      if (tj.avatar_in.empty()) throw ConfigError("train-joint: --avatar (stage-2 output) required");
      AvatarBundle avatar = AvatarBundle::load(tj.avatar_in);
      avatar.config = cfg;
      guard.track_dir(tj.out);
      const JointTrainSummary s = train_joint(scene, avatar, cfg,
                                              tj.log.empty() ? fs::path{} : fs::path(tj.log));
      avatar.save(tj.out);
      guard.commit();
      std::cout << "train-joint: held_out_psnr=" << s.held_out_psnr
                << " rigid_only_psnr=" << s.rigid_only_psnr << "\n";
      return 0;
    }

    if (swap_cmd->parsed()) {
      AvatarBundle face = AvatarBundle::load(s_face);
      const AvatarBundle hair = AvatarBundle::load(s_hair);
      const RigidTransform t = swap_hair(face, hair);
      guard.track_dir(s_out);
      face.save(s_out);
      guard.commit();
      std::cout << "swap-hair: scale=" << t.scale << "\n";
      return 0;
    }

    if (edit_cmd->parsed()) {
      const SceneDataset scene = SceneDataset::open(e_scene);
      AvatarBundle avatar = AvatarBundle::load(e_avatar);
      const Image painted = read_png(e_paint);
      const Image mask = read_png(e_mask);
      std::vector<FrameRecord> reg_views;
      for (int v = 0; v < scene.view_count() && static_cast<int>(reg_views.size()) < e_reg_views;
           ++v) {
        if (v == e_view) continue;
        reg_views.push_back(scene.load_record(e_frame, v));
      }
      const EditSummary s =
          edit_texture(avatar, painted, mask, scene.cameras.at(e_view),
                       scene.frame_params.at(e_frame), frame_rigid(avatar, e_frame), reg_views,
                       e_steps);
      if (s.empty_mask) {
        std::cerr << "edit-texture: empty painting mask, nothing to do\n";
        return 0;
      }
      guard.track_dir(e_out);
      avatar.save(e_out);
      guard.commit();
      std::cout << "edit-texture: steps=" << s.steps << " final_loss=" << s.final_loss << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      const SceneDataset scene = SceneDataset::open(v_scene);
      const AvatarBundle avatar = AvatarBundle::load(v_avatar);
      TrainConfig cfg = avatar.config;
      if (v_blend == "nearz") cfg.use_nearz = true;
      else if (v_blend == "gsdepth") cfg.use_nearz = false;
      if (v_early == "on") cfg.early_stop = true;
      else if (v_early == "off") cfg.early_stop = false;
      const RenderSettings settings = settings_from_config(cfg);

      guard.track(v_out);
      std::ofstream csv(v_out);
      if (!csv) throw IoError("eval: cannot open " + v_out);
      csv << "frame,view,psnr,ssim,depth_mae\n";
      double sum_psnr = 0.0, sum_ssim = 0.0, sum_mae = 0.0;
      int count = 0;
      for (int f : parse_int_list(v_frames, scene.frame_count())) {
        for (int v : parse_int_list(v_views, scene.view_count())) {
          const FrameRecord rec = scene.load_record(f, v);
          const FrameRender render = render_frame(avatar, rec.params, rec.camera,
                                                  frame_rigid(avatar, f), settings);
          const Image mask = union_mask(rec.mask_coverage, rec.mask_hair);
          const double p = psnr(rec.image_full, quantize8(render.composite_color), mask);
          const double s = 1.0 - dssim(rec.image_full, quantize8(render.composite_color), mask);
          const double mae = masked_mae(rec.depth, render.mesh.depth, rec.mask_coverage);
          csv << f << "," << v << "," << p << "," << s << "," << mae << "\n";
          sum_psnr += p;
          sum_ssim += s;
          sum_mae += mae;
          ++count;
        }
      }
      csv << "mean,," << sum_psnr / count << "," << sum_ssim / count << "," << sum_mae / count
          << "\n";
      guard.commit();
      std::cout << "eval: mean psnr=" << sum_psnr / count << "\n";
      return 0;
    }

    if (dump_cmd->parsed()) {
      const SceneDataset scene = SceneDataset::open(d_scene);
      const AvatarBundle avatar = AvatarBundle::load(d_avatar);
      TrainConfig cfg = avatar.config;
      if (d_blend == "nearz") cfg.use_nearz = true;
      else if (d_blend == "gsdepth") cfg.use_nearz = false;
      if (d_early == "on") cfg.early_stop = true;
      else if (d_early == "off") cfg.early_stop = false;
      const FrameRender out =
          render_frame(avatar, scene.frame_params.at(d_frame), scene.cameras.at(d_view),
                       frame_rigid(avatar, d_frame), settings_from_config(cfg));
      fs::create_directories(d_out);
      for (const auto& [name, img] :
           std::vector<std::pair<std::string, const Image*>>{{"occlusion.png", &out.occlusion},
                                                             {"soft_mask.png", &out.soft_mask},
                                                             {"hair_blend.png", &out.hair_blend}}) {
        guard.track(fs::path(d_out) / name);
        write_png(fs::path(d_out) / name, *img);
      }
      guard.commit();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
