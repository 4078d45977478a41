#ifndef BODYFORMER_CHECKPOINT_HPP
#define BODYFORMER_CHECKPOINT_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bodyformer {

/// Flat binary checkpoint / array-bundle format (little endian throughout):
///   magic "BFCK" | u32 version | u32 meta-count | meta entries | u64 n-records
///   meta entry:  u32 key-len, key bytes, u32 val-len, val bytes
///   record:      u32 name-len, name bytes, u32 ndim, u64 dims..., f64 values
/// Records are written sorted by name so serialization is deterministic.
struct ArrayBundle {
  std::map<std::string, std::string> meta;
  // name -> (shape, row-major data)
  std::map<std::string, std::pair<std::vector<std::uint64_t>, std::vector<double>>>
      arrays;

  void put(const std::string& name, const Eigen::VectorXd& v);
  void put(const std::string& name,
           const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                               Eigen::RowMajor>& m);
  bool has(const std::string& name) const { return arrays.count(name) != 0; }
  Eigen::VectorXd vec(const std::string& name) const;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> mat(
      const std::string& name) const;
};

void write_bundle(const std::string& path, const ArrayBundle& bundle);
ArrayBundle read_bundle(const std::string& path);

}  // namespace bodyformer

#endif
