#include "bodyformer/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bodyformer {

namespace {

constexpr char kMagic[4] = {'B', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("bundle: truncated file");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, std::uint32_t(s.size()));
  os.write(s.data(), std::streamsize(s.size()));
}

std::string read_string(std::istream& is) {
  auto len = read_pod<std::uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), std::streamsize(len));
  if (!is) throw ParseError("bundle: truncated string");
  return s;
}

}  // namespace

void ArrayBundle::put(const std::string& name, const Eigen::VectorXd& v) {
  arrays[name] = {{std::uint64_t(v.size())},
                  std::vector<double>(v.data(), v.data() + v.size())};
}

void ArrayBundle::put(
    const std::string& name,
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>&
        m) {
  arrays[name] = {{std::uint64_t(m.rows()), std::uint64_t(m.cols())},
                  std::vector<double>(m.data(), m.data() + m.size())};
}

Eigen::VectorXd ArrayBundle::vec(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw ParseError("bundle: missing array " + name);
  return Eigen::Map<const Eigen::VectorXd>(it->second.second.data(),
                                           Eigen::Index(it->second.second.size()));
}

Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
ArrayBundle::mat(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw ParseError("bundle: missing array " + name);
  const auto& [shape, data] = it->second;
  if (shape.size() != 2) throw ParseError("bundle: " + name + " is not rank 2");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(
      data.data(), Eigen::Index(shape[0]), Eigen::Index(shape[1]));
}

void write_bundle(const std::string& path, const ArrayBundle& bundle) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("bundle: cannot open " + path + " for write");
  os.write(kMagic, 4);
  write_pod<std::uint32_t>(os, kVersion);
  write_pod<std::uint32_t>(os, std::uint32_t(bundle.meta.size()));
  for (const auto& [k, v] : bundle.meta) {
    write_string(os, k);
    write_string(os, v);
  }
  write_pod<std::uint64_t>(os, bundle.arrays.size());
  for (const auto& [name, entry] : bundle.arrays) {
    write_string(os, name);
    write_pod<std::uint32_t>(os, std::uint32_t(entry.first.size()));
    for (auto d : entry.first) write_pod<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(entry.second.data()),
             std::streamsize(entry.second.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("bundle: write failed for " + path);
}

ArrayBundle read_bundle(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("bundle: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("bundle: bad magic in " + path);
  auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion)
    throw ParseError("bundle: unsupported version in " + path);
  ArrayBundle b;
  auto n_meta = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = read_string(is);
    b.meta[k] = read_string(is);
  }
  auto n_rec = read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n_rec; ++i) {
    std::string name = read_string(is);
    auto ndim = read_pod<std::uint32_t>(is);
    std::vector<std::uint64_t> shape(ndim);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = read_pod<std::uint64_t>(is);
      count *= d;
    }
    std::vector<double> data(count);
    is.read(reinterpret_cast<char*>(data.data()),
            std::streamsize(count * sizeof(double)));
    if (!is) throw ParseError("bundle: truncated data for " + name);
    b.arrays[name] = {std::move(shape), std::move(data)};
  }
  return b;
}

}  // namespace bodyformer
