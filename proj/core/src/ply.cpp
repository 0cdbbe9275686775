#include "meshsplat/ply.hpp"

#include "meshsplat/errors.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace meshsplat {

namespace {

std::vector<std::string> cloud_property_names(int sh_coeff_count) {
  std::vector<std::string> names = {"x", "y", "z"};
  for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
  for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
  names.push_back("opacity");
  for (int c = 0; c < 3; ++c) names.push_back("f_dc_" + std::to_string(c));
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < sh_coeff_count - 1; ++k) {
      names.push_back("f_rest_" + std::to_string(c * (sh_coeff_count - 1) + k));
    }
  }
  return names;
}

}  // namespace

void write_cloud_ply(const std::filesystem::path& path, const GaussianCloud& cloud) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_cloud_ply: cannot open " + path.string());

  const auto names = cloud_property_names(cloud.sh_coeff_count);
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  for (const std::string& n : names) out << "property double " << n << "\n";
  out << "end_header\n";

  const int k_rest = cloud.sh_coeff_count - 1;
  std::vector<double> row(names.size());
  for (int i = 0; i < cloud.size(); ++i) {
    std::size_t p = 0;
    for (int c = 0; c < 3; ++c) row[p++] = cloud.centers[i][c];
    for (int c = 0; c < 4; ++c) row[p++] = cloud.rotations[i][c];
    for (int c = 0; c < 3; ++c) row[p++] = cloud.log_scales[i][c];
    row[p++] = cloud.opacity_logits[i];
    const double* sh = cloud.sh_at(i);
    for (int c = 0; c < 3; ++c) row[p++] = sh[c];  // coeff 0
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < k_rest; ++k) row[p++] = sh[(k + 1) * 3 + c];
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) throw IoError("write_cloud_ply: write failed for " + path.string());
}

GaussianCloud read_cloud_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_cloud_ply: cannot open " + path.string());

  std::string line;
  std::getline(in, line);
  if (line != "ply") throw IoError("read_cloud_ply: not a PLY file: " + path.string());
  std::getline(in, line);
  if (line != "format binary_little_endian 1.0") {
    throw IoError("read_cloud_ply: unsupported PLY format in " + path.string());
  }

  int n_vertices = -1;
  std::vector<std::pair<std::string, bool>> props;  // name, is_double
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment") continue;
    if (tok == "element") {
      std::string what;
      ls >> what >> n_vertices;
      if (what != "vertex") throw IoError("read_cloud_ply: unexpected element " + what);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "double" && type != "float") {
        throw IoError("read_cloud_ply: unsupported property type " + type);
      }
      props.emplace_back(name, type == "double");
    }
  }
  if (n_vertices < 0) throw IoError("read_cloud_ply: missing vertex element");

  int n_rest = 0;
  for (const auto& [name, _] : props) {
    if (name.rfind("f_rest_", 0) == 0) ++n_rest;
  }
  if (n_rest % 3 != 0) throw IoError("read_cloud_ply: f_rest count not divisible by 3");
  const int sh_coeffs = 1 + n_rest / 3;
  if (sh_coeffs != 1 && sh_coeffs != 4 && sh_coeffs != 9 && sh_coeffs != 16) {
    throw IoError("read_cloud_ply: unsupported SH coefficient count");
  }

  const auto expected = cloud_property_names(sh_coeffs);
  if (props.size() != expected.size()) {
    throw IoError("read_cloud_ply: unexpected property layout");
  }
  for (std::size_t i = 0; i < props.size(); ++i) {
    if (props[i].first != expected[i]) {
      throw IoError("read_cloud_ply: unexpected property " + props[i].first);
    }
  }

  GaussianCloud cloud;
  cloud.resize(n_vertices, sh_coeffs);
  const int k_rest = sh_coeffs - 1;
  std::vector<double> row(props.size());
  for (int i = 0; i < n_vertices; ++i) {
    for (std::size_t p = 0; p < props.size(); ++p) {
      if (props[p].second) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(double));
        row[p] = v;
      } else {
        float v;
        in.read(reinterpret_cast<char*>(&v), sizeof(float));
        row[p] = v;
      }
    }
    if (!in) throw IoError("read_cloud_ply: truncated data in " + path.string());
    std::size_t p = 0;
    for (int c = 0; c < 3; ++c) cloud.centers[i][c] = row[p++];
    for (int c = 0; c < 4; ++c) cloud.rotations[i][c] = row[p++];
    for (int c = 0; c < 3; ++c) cloud.log_scales[i][c] = row[p++];
    cloud.opacity_logits[i] = row[p++];
    double* sh = cloud.sh_at(i);
    for (int c = 0; c < 3; ++c) sh[c] = row[p++];
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < k_rest; ++k) sh[(k + 1) * 3 + c] = row[p++];
    }
  }
  return cloud;
}

}  // namespace meshsplat
