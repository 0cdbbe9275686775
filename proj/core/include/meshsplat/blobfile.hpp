#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace meshsplat {

/// Named-array container: a structured text header (name, dtype, shape per
/// array) followed by raw little-endian data blobs in header order. dtype is
/// f8 for checkpoints so save/load round-trips are exact; f4 and i4 are
/// supported for compact interchange.
class BlobFile {
 public:
  void put(const std::string& name, const std::vector<double>& values,
           std::vector<std::int64_t> shape = {});
  void put_ints(const std::string& name, const std::vector<std::int32_t>& values,
                std::vector<std::int64_t> shape = {});
  void put_f32(const std::string& name, const std::vector<double>& values,
               std::vector<std::int64_t> shape = {});

  bool has(const std::string& name) const { return arrays_.count(name) != 0; }
  const std::vector<double>& get(const std::string& name) const;
  std::vector<std::int32_t> get_ints(const std::string& name) const;
  const std::vector<std::int64_t>& shape(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static BlobFile load(const std::filesystem::path& path);

 private:
  struct Entry {
    std::string dtype;  // "f8", "f4", "i4"
    std::vector<std::int64_t> shape;
    std::vector<double> values;  // canonical in-memory representation
  };
  std::map<std::string, Entry> arrays_;
  std::vector<std::string> order_;
};

}  // namespace meshsplat
