#pragma once

#include "priorflow/types.hpp"

#include <filesystem>
#include <map>
#include <vector>

namespace priorflow {

struct LabeledPoint {
  Vector x;
  AttributeId attr;
};

/// Labeled latent points. Construction enforces a shared dimension, finite
/// coordinates, and balanced per-attribute counts.
class LatentDataset {
 public:
  /// Largest tolerated (max - min) / max spread of per-attribute counts.
  static constexpr double kMaxImbalance = 0.10;

  LatentDataset(Eigen::Index dim, std::vector<LabeledPoint> records);

  Eigen::Index dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return records_.size(); }
  const std::vector<LabeledPoint>& records() const noexcept { return records_; }

  /// Sorted attribute ids.
  std::vector<AttributeId> attributes() const;
  std::map<AttributeId, std::size_t> counts() const;
  PointBatch points_of(const AttributeId& attr) const;

 private:
  Eigen::Index dim_;
  std::vector<LabeledPoint> records_;
};

/// Throws DataError when counts differ by more than kMaxImbalance.
void check_balance(const std::map<AttributeId, std::size_t>& counts);

/// JSON-lines: one `{"x": [...], "attr": "name"}` object per line.
void save_dataset(const LatentDataset& data, const std::filesystem::path& path);
LatentDataset load_dataset(const std::filesystem::path& path);

std::string dataset_to_jsonl(const LatentDataset& data);
/// `source` names the input in error messages.
LatentDataset dataset_from_jsonl(std::istream& in, const std::string& source = "<input>");

/// Writes points without the balance constraint (e.g. controlled samples
/// all tagged with one label).
void write_points_jsonl(std::ostream& out, const PointBatch& points, const std::string& label);

}  // namespace priorflow
