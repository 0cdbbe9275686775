#include "meshsplat/config.hpp"

#include "meshsplat/errors.hpp"

#include <json.hpp>

#include <fstream>

namespace meshsplat {

namespace {

using nlohmann::json;

json weights_to_json(const LossWeights& w) {
  return json{{"photo", w.photo},
              {"ssim", w.ssim},
              {"depth", w.depth},
              {"normal", w.normal},
              {"shrink", w.shrink},
              {"laplacian", w.laplacian},
              {"normal_consistency", w.normal_consistency},
              {"edge_length", w.edge_length},
              {"silhouette", w.silhouette},
              {"solid", w.solid},
              {"aiap", w.aiap},
              {"delta_reg", w.delta_reg}};
}

LossWeights weights_from_json(const json& j) {
  LossWeights w;
  w.photo = j.value("photo", w.photo);
  w.ssim = j.value("ssim", w.ssim);
  w.depth = j.value("depth", w.depth);
  w.normal = j.value("normal", w.normal);
  w.shrink = j.value("shrink", w.shrink);
  w.laplacian = j.value("laplacian", w.laplacian);
  w.normal_consistency = j.value("normal_consistency", w.normal_consistency);
  w.edge_length = j.value("edge_length", w.edge_length);
  w.silhouette = j.value("silhouette", w.silhouette);
  w.solid = j.value("solid", w.solid);
  w.aiap = j.value("aiap", w.aiap);
  w.delta_reg = j.value("delta_reg", w.delta_reg);
  return w;
}

}  // namespace

std::string TrainConfig::to_json() const {
  json j;
  j["weights"] = weights_to_json(weights);
  j["iters"] = {{"face", iters_face}, {"hair", iters_hair}, {"joint", iters_joint}};
  j["lr"] = {{"texture", lr_texture},
             {"displacement", lr_displacement},
             {"decoder", lr_decoder},
             {"position_scale", lr_position_scale},
             {"opacity", lr_opacity},
             {"scale", lr_scale},
             {"rotation", lr_rotation},
             {"sh", lr_sh},
             {"field", lr_field}};
  j["blend"] = {{"blur_sigma", blur_sigma},
                {"nearz_threshold", nearz_threshold},
                {"early_stop", early_stop},
                {"use_nearz", use_nearz}};
  j["losses"] = {{"erode_radius", erode_radius},
                 {"depth_threshold", depth_threshold},
                 {"aiap_k", aiap_k}};
  j["cloud"] = {{"prune_opacity", prune_opacity},
                {"prune_interval", prune_interval},
                {"densify", densify},
                {"densify_grad_threshold", densify_grad_threshold},
                {"densify_interval", densify_interval},
                {"max_gaussians", max_gaussians}};
  j["seed"] = seed;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  TrainConfig c;
  if (j.contains("weights")) c.weights = weights_from_json(j["weights"]);
  if (j.contains("iters")) {
    c.iters_face = j["iters"].value("face", c.iters_face);
    c.iters_hair = j["iters"].value("hair", c.iters_hair);
    c.iters_joint = j["iters"].value("joint", c.iters_joint);
  }
  if (j.contains("lr")) {
    const auto& lr = j["lr"];
    c.lr_texture = lr.value("texture", c.lr_texture);
    c.lr_displacement = lr.value("displacement", c.lr_displacement);
    c.lr_decoder = lr.value("decoder", c.lr_decoder);
    c.lr_position_scale = lr.value("position_scale", c.lr_position_scale);
    c.lr_opacity = lr.value("opacity", c.lr_opacity);
    c.lr_scale = lr.value("scale", c.lr_scale);
    c.lr_rotation = lr.value("rotation", c.lr_rotation);
    c.lr_sh = lr.value("sh", c.lr_sh);
    c.lr_field = lr.value("field", c.lr_field);
  }
  if (j.contains("blend")) {
    const auto& b = j["blend"];
    c.blur_sigma = b.value("blur_sigma", c.blur_sigma);
    c.nearz_threshold = b.value("nearz_threshold", c.nearz_threshold);
    c.early_stop = b.value("early_stop", c.early_stop);
    c.use_nearz = b.value("use_nearz", c.use_nearz);
  }
  if (j.contains("losses")) {
    const auto& l = j["losses"];
    c.erode_radius = l.value("erode_radius", c.erode_radius);
    c.depth_threshold = l.value("depth_threshold", c.depth_threshold);
    c.aiap_k = l.value("aiap_k", c.aiap_k);
  }
  if (j.contains("cloud")) {
    const auto& g = j["cloud"];
    c.prune_opacity = g.value("prune_opacity", c.prune_opacity);
    c.prune_interval = g.value("prune_interval", c.prune_interval);
    c.densify = g.value("densify", c.densify);
    c.densify_grad_threshold = g.value("densify_grad_threshold", c.densify_grad_threshold);
    c.densify_interval = g.value("densify_interval", c.densify_interval);
    c.max_gaussians = g.value("max_gaussians", c.max_gaussians);
  }
  c.seed = j.value("seed", c.seed);
  c.weights.validate();
  return c;
}

void TrainConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("TrainConfig::save: cannot open " + path.string());
  out << to_json() << "\n";
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("TrainConfig::load: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

}  // namespace meshsplat
