#include "meshsplat/blobfile.hpp"

#include "meshsplat/errors.hpp"

#include <fstream>
#include <sstream>

namespace meshsplat {

namespace {

std::int64_t element_count(const std::vector<std::int64_t>& shape, std::size_t flat) {
  if (shape.empty()) return static_cast<std::int64_t>(flat);
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

}  // namespace

void BlobFile::put(const std::string& name, const std::vector<double>& values,
                   std::vector<std::int64_t> shape) {
  if (shape.empty()) shape = {static_cast<std::int64_t>(values.size())};
  if (element_count(shape, values.size()) != static_cast<std::int64_t>(values.size())) {
    throw ParameterError("BlobFile::put: shape does not match value count for " + name);
  }
  if (!arrays_.count(name)) order_.push_back(name);
  arrays_[name] = Entry{"f8", std::move(shape), values};
}

void BlobFile::put_f32(const std::string& name, const std::vector<double>& values,
                       std::vector<std::int64_t> shape) {
  put(name, values, std::move(shape));
  arrays_[name].dtype = "f4";
}

void BlobFile::put_ints(const std::string& name, const std::vector<std::int32_t>& values,
                        std::vector<std::int64_t> shape) {
  if (shape.empty()) shape = {static_cast<std::int64_t>(values.size())};
  std::vector<double> tmp(values.begin(), values.end());
  if (element_count(shape, tmp.size()) != static_cast<std::int64_t>(tmp.size())) {
    throw ParameterError("BlobFile::put_ints: shape mismatch for " + name);
  }
  if (!arrays_.count(name)) order_.push_back(name);
  arrays_[name] = Entry{"i4", std::move(shape), std::move(tmp)};
}

const std::vector<double>& BlobFile::get(const std::string& name) const {
  const auto it = arrays_.find(name);
  if (it == arrays_.end()) throw IoError("BlobFile: missing array " + name);
  return it->second.values;
}

std::vector<std::int32_t> BlobFile::get_ints(const std::string& name) const {
  const auto& vals = get(name);
  std::vector<std::int32_t> out;
  out.reserve(vals.size());
  for (double v : vals) out.push_back(static_cast<std::int32_t>(v));
  return out;
}

const std::vector<std::int64_t>& BlobFile::shape(const std::string& name) const {
  const auto it = arrays_.find(name);
  if (it == arrays_.end()) throw IoError("BlobFile: missing array " + name);
  return it->second.shape;
}

void BlobFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("BlobFile::save: cannot open " + path.string());
  out << "MSBLOB 1\n" << order_.size() << "\n";
  for (const std::string& name : order_) {
    const Entry& e = arrays_.at(name);
    out << name << " " << e.dtype;
    out << " " << e.shape.size();
    for (std::int64_t d : e.shape) out << " " << d;
    out << "\n";
  }
  out << "DATA\n";
  for (const std::string& name : order_) {
    const Entry& e = arrays_.at(name);
    if (e.dtype == "f8") {
      out.write(reinterpret_cast<const char*>(e.values.data()),
                static_cast<std::streamsize>(e.values.size() * sizeof(double)));
    } else if (e.dtype == "f4") {
      std::vector<float> tmp(e.values.begin(), e.values.end());
      out.write(reinterpret_cast<const char*>(tmp.data()),
                static_cast<std::streamsize>(tmp.size() * sizeof(float)));
    } else {
      std::vector<std::int32_t> tmp;
      tmp.reserve(e.values.size());
      for (double v : e.values) tmp.push_back(static_cast<std::int32_t>(v));
      out.write(reinterpret_cast<const char*>(tmp.data()),
                static_cast<std::streamsize>(tmp.size() * sizeof(std::int32_t)));
    }
  }
  if (!out) throw IoError("BlobFile::save: write failed for " + path.string());
}

BlobFile BlobFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("BlobFile::load: cannot open " + path.string());
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  in >> magic >> version >> count;
  if (magic != "MSBLOB" || version != 1) {
    throw IoError("BlobFile::load: bad header in " + path.string());
  }

  BlobFile blob;
  struct Pending {
    std::string name;
    std::string dtype;
    std::vector<std::int64_t> shape;
  };
  std::vector<Pending> pending;
  for (std::size_t i = 0; i < count; ++i) {
    Pending p;
    std::size_t rank = 0;
    in >> p.name >> p.dtype >> rank;
    p.shape.resize(rank);
    for (std::size_t r = 0; r < rank; ++r) in >> p.shape[r];
    pending.push_back(std::move(p));
  }
  std::string data_tag;
  in >> data_tag;
  if (data_tag != "DATA") throw IoError("BlobFile::load: missing DATA section");
  in.get();  // newline

  for (Pending& p : pending) {
    std::int64_t n = 1;
    for (std::int64_t d : p.shape) n *= d;
    std::vector<double> values(static_cast<std::size_t>(n));
    if (p.dtype == "f8") {
      in.read(reinterpret_cast<char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
    } else if (p.dtype == "f4") {
      std::vector<float> tmp(static_cast<std::size_t>(n));
      in.read(reinterpret_cast<char*>(tmp.data()),
              static_cast<std::streamsize>(tmp.size() * sizeof(float)));
      for (std::size_t k = 0; k < tmp.size(); ++k) values[k] = tmp[k];
    } else if (p.dtype == "i4") {
      std::vector<std::int32_t> tmp(static_cast<std::size_t>(n));
      in.read(reinterpret_cast<char*>(tmp.data()),
              static_cast<std::streamsize>(tmp.size() * sizeof(std::int32_t)));
      for (std::size_t k = 0; k < tmp.size(); ++k) values[k] = tmp[k];
    } else {
      throw IoError("BlobFile::load: unknown dtype " + p.dtype);
    }
    if (!in) throw IoError("BlobFile::load: truncated data in " + path.string());
    blob.order_.push_back(p.name);
    blob.arrays_[p.name] = Entry{p.dtype, std::move(p.shape), std::move(values)};
  }
  return blob;
}

}  // namespace meshsplat
