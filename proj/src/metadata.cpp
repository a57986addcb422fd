#include "qbin/metadata.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qbin/csv.hpp"
#include "qbin/error.hpp"

namespace qbin {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Store, "cannot write '" + tmp + "'");
    out << content;
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    fail(ErrorKind::Store, "cannot rename '" + tmp + "' into place");
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Store, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

OwnerMetadata::OwnerMetadata(std::string dir) : dir_(std::move(dir)) {}

std::string OwnerMetadata::path(const std::string& leaf) const { return dir_ + "/" + leaf; }

void OwnerMetadata::init() {
  fs::create_directories(dir_);
  fs::create_directories(path("staging"));
  fs::create_directories(path("layouts"));
  if (!fs::exists(path("config.json"))) {
    write_file_atomic(path("config.json"), "{}\n");
  }
}

bool OwnerMetadata::exists() const { return fs::exists(path("config.json")); }

void OwnerMetadata::stage_relation(const std::string& name,
                                   const std::vector<TupleRecord>& rows,
                                   const std::vector<std::string>& schema) {
  write_file_atomic(path("staging/" + name + ".csv"), to_canonical_csv(rows, schema));
}

std::vector<TupleRecord> OwnerMetadata::load_staged(const std::string& name) const {
  auto rows = parse_csv(read_file(path("staging/" + name + ".csv")));
  return records_from_csv(rows, SensitivitySource::flag_column("sens"),
                          std::string("tuple_id"));
}

std::vector<std::string> OwnerMetadata::staged_schema(const std::string& name) const {
  auto rows = parse_csv(read_file(path("staging/" + name + ".csv")));
  if (rows.empty()) return {};
  std::vector<std::string> schema;
  for (const auto& col : rows.front()) {
    if (col != "tuple_id" && col != "sens") schema.push_back(col);
  }
  return schema;
}

bool OwnerMetadata::has_staged(const std::string& name) const {
  return fs::exists(path("staging/" + name + ".csv"));
}

void OwnerMetadata::save_layout(const std::string& relation, const std::string& attribute,
                                const BinLayout& layout) {
  qbin::save_layout(path("layouts/" + relation + "." + attribute + ".layout.json"), layout);
}

BinLayout OwnerMetadata::load_layout(const std::string& relation,
                                     const std::string& attribute) const {
  return qbin::load_layout(path("layouts/" + relation + "." + attribute + ".layout.json"));
}

bool OwnerMetadata::has_layout(const std::string& relation,
                               const std::string& attribute) const {
  return fs::exists(path("layouts/" + relation + "." + attribute + ".layout.json"));
}

void OwnerMetadata::save_histogram(const std::string& relation,
                                   const std::string& attribute,
                                   const OccurrenceHistogram& histogram) {
  json j;
  for (const auto& [attr, values] : histogram.counts) {
    json v = json::object();
    for (const auto& [value, count] : values) v[value] = count;
    j[attr] = v;
  }
  write_file_atomic(path("layouts/" + relation + "." + attribute + ".occurrences.json"),
                    j.dump() + "\n");
}

OccurrenceHistogram OwnerMetadata::load_histogram(const std::string& relation,
                                                  const std::string& attribute) const {
  OccurrenceHistogram histogram;
  json j = json::parse(
      read_file(path("layouts/" + relation + "." + attribute + ".occurrences.json")));
  for (const auto& [attr, values] : j.items()) {
    for (const auto& [value, count] : values.items()) {
      histogram.counts[attr][value] = count.get<std::uint64_t>();
    }
  }
  return histogram;
}

void OwnerMetadata::set_config(const std::string& key, const std::string& value) {
  json j = json::parse(read_file(path("config.json")));
  j[key] = value;
  write_file_atomic(path("config.json"), j.dump(2) + "\n");
}

std::optional<std::string> OwnerMetadata::config(const std::string& key) const {
  json j = json::parse(read_file(path("config.json")));
  if (!j.contains(key)) return std::nullopt;
  return j.at(key).get<std::string>();
}

void OwnerMetadata::append_overhead(const std::string& relation,
                                    const std::string& attribute,
                                    std::uint64_t retrieved) {
  std::string file = path("layouts/" + relation + "." + attribute + ".history.json");
  json j = fs::exists(file) ? json::parse(read_file(file)) : json::array();
  j.push_back(retrieved);
  write_file_atomic(file, j.dump() + "\n");
}

std::vector<std::uint64_t> OwnerMetadata::overhead_history(
    const std::string& relation, const std::string& attribute) const {
  std::string file = path("layouts/" + relation + "." + attribute + ".history.json");
  if (!fs::exists(file)) return {};
  return json::parse(read_file(file)).get<std::vector<std::uint64_t>>();
}

void OwnerMetadata::reset_overhead(const std::string& relation,
                                   const std::string& attribute) {
  std::string file = path("layouts/" + relation + "." + attribute + ".history.json");
  write_file_atomic(file, "[]\n");
}

void OwnerMetadata::set_baseline(const std::string& relation, const std::string& attribute,
                                 double baseline) {
  set_config("baseline." + relation + "." + attribute, std::to_string(baseline));
}

std::optional<double> OwnerMetadata::baseline(const std::string& relation,
                                              const std::string& attribute) const {
  auto raw = config("baseline." + relation + "." + attribute);
  if (!raw) return std::nullopt;
  return std::stod(*raw);
}

std::uint64_t OwnerMetadata::metadata_bytes() const {
  std::uint64_t total = 0;
  if (fs::exists(path("layouts"))) {
    for (const auto& entry : fs::directory_iterator(path("layouts"))) {
      if (entry.is_regular_file()) total += entry.file_size();
    }
  }
  if (fs::exists(path("config.json"))) total += fs::file_size(path("config.json"));
  return total;
}

MetadataLock::MetadataLock(const std::string& dir) : lock_path_(dir + "/.lock") {
  fs::create_directories(dir);
  int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    fail(ErrorKind::Usage,
         "metadata directory is locked (" + lock_path_ +
             " exists); another command is running, or remove a stale lock");
  }
  std::string pid = std::to_string(::getpid()) + "\n";
  ssize_t n = ::write(fd, pid.data(), pid.size());
  (void)n;
  ::close(fd);
  held_ = true;
}

MetadataLock::~MetadataLock() {
  if (held_) ::unlink(lock_path_.c_str());
}

double layout_baseline_cost(const BinLayout& layout, const ValueHistogram& hist) {
  double sensitive = 0;
  if (!layout.bin_tuple_totals.empty()) {
    std::uint64_t mx = 0;
    for (auto t : layout.bin_tuple_totals) mx = std::max(mx, t);
    sensitive = static_cast<double>(mx);
  }
  double nonsensitive = 0;
  if (!layout.nonsensitive_bins.empty()) {
    std::uint64_t total = 0;
    for (const auto& bin : layout.nonsensitive_bins) {
      for (const auto& value : bin) total += hist.at(value).nonsensitive;
    }
    nonsensitive = static_cast<double>(total) /
                   static_cast<double>(layout.nonsensitive_bins.size());
  }
  return sensitive + nonsensitive;
}

}  // namespace qbin
