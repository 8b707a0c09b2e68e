#include "priorflow/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace priorflow {

using nlohmann::json;

void check_balance(const std::map<AttributeId, std::size_t>& counts) {
  if (counts.empty()) throw DataError("dataset has no attributes");
  std::size_t lo = counts.begin()->second;
  std::size_t hi = lo;
  for (const auto& [attr, n] : counts) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  if (static_cast<double>(hi - lo) > LatentDataset::kMaxImbalance * static_cast<double>(hi)) {
    std::ostringstream msg;
    msg << "unbalanced dataset: per-attribute counts range from " << lo << " to " << hi
        << " (more than 10% apart)";
    throw DataError(msg.str());
  }
}

LatentDataset::LatentDataset(Eigen::Index dim, std::vector<LabeledPoint> records)
    : dim_(dim), records_(std::move(records)) {
  if (dim_ <= 0) throw DimensionError("dataset dimension must be positive");
  if (records_.empty()) throw DataError("no records");
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.x.size() != dim_) {
      throw DimensionError("record " + std::to_string(i) + ": expected dimension " + std::to_string(dim_) +
                           ", got " + std::to_string(r.x.size()));
    }
    if (!r.x.allFinite()) throw DataError("record " + std::to_string(i) + " has non-finite coordinates");
    if (r.attr.empty()) throw DataError("record " + std::to_string(i) + " has an empty label");
  }
  check_balance(counts());
}

std::vector<AttributeId> LatentDataset::attributes() const {
  std::vector<AttributeId> out;
  for (const auto& [attr, n] : counts()) out.push_back(attr);
  return out;
}

std::map<AttributeId, std::size_t> LatentDataset::counts() const {
  std::map<AttributeId, std::size_t> c;
  for (const auto& r : records_) ++c[r.attr];
  return c;
}

PointBatch LatentDataset::points_of(const AttributeId& attr) const {
  const auto n = static_cast<Eigen::Index>(
      std::count_if(records_.begin(), records_.end(), [&](const LabeledPoint& r) { return r.attr == attr; }));
  if (n == 0) throw UnknownAttributeError(attr);
  PointBatch out(dim_, n);
  Eigen::Index j = 0;
  for (const auto& r : records_) {
    if (r.attr == attr) out.col(j++) = r.x;
  }
  return out;
}

namespace {

json record_json(const Vector& x, const std::string& label) {
  json row;
  row["x"] = std::vector<double>(x.data(), x.data() + x.size());
  row["attr"] = label;
  return row;
}

[[noreturn]] void fail_at(const std::string& source, std::size_t line, const std::string& what) {
  throw DataError(source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

void write_points_jsonl(std::ostream& out, const PointBatch& points, const std::string& label) {
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    const Vector x = points.col(j);
    if (!x.allFinite()) throw NumericalError("refusing to write a non-finite point");
    out << record_json(x, label).dump() << '\n';
  }
}

std::string dataset_to_jsonl(const LatentDataset& data) {
  std::ostringstream out;
  for (const auto& r : data.records()) out << record_json(r.x, r.attr).dump() << '\n';
  return out.str();
}

LatentDataset dataset_from_jsonl(std::istream& in, const std::string& source) {
  std::vector<LabeledPoint> records;
  Eigen::Index dim = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      fail_at(source, line_no, std::string("malformed record: ") + e.what());
    }
    if (!row.is_object() || !row.contains("x") || !row.contains("attr"))
      fail_at(source, line_no, "record must be an object with \"x\" and \"attr\"");
    const auto& xs = row["x"];
    if (!xs.is_array() || xs.empty()) fail_at(source, line_no, "\"x\" must be a non-empty array");
    if (!row["attr"].is_string() || row["attr"].get<std::string>().empty())
      fail_at(source, line_no, "\"attr\" must be a non-empty string");
    Vector x(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!xs[i].is_number()) fail_at(source, line_no, "non-finite or non-numeric coordinate");
      x(static_cast<Eigen::Index>(i)) = xs[i].get<double>();
      if (!std::isfinite(x(static_cast<Eigen::Index>(i)))) fail_at(source, line_no, "non-finite coordinate");
    }
    if (dim < 0) {
      dim = x.size();
    } else if (x.size() != dim) {
      fail_at(source, line_no,
              "inconsistent dimension: expected " + std::to_string(dim) + ", got " + std::to_string(x.size()));
    }
    records.push_back({std::move(x), row["attr"].get<std::string>()});
  }
  if (records.empty()) throw DataError(source + ": no records");
  try {
    return LatentDataset(dim, std::move(records));
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
}

void save_dataset(const LatentDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << dataset_to_jsonl(data);
  if (!out) throw DataError("failed writing " + path.string());
}

LatentDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return dataset_from_jsonl(in, path.string());
}

}  // namespace priorflow
