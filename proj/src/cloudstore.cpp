#include "qbin/cloudstore.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qbin/csv.hpp"
#include "qbin/error.hpp"

namespace qbin {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) fail(ErrorKind::Store, "truncated record");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(in[pos + i])) << (8 * i);
  }
  pos += 4;
  return v;
}

void put_bytes(Bytes& out, std::string_view s) {
  std::uint32_t n = static_cast<std::uint32_t>(s.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((n >> (8 * i)) & 0xff));
  out.insert(out.end(), s.begin(), s.end());
}

std::string take_bytes(std::span<const std::uint8_t> data, std::size_t& pos) {
  if (pos + 4 > data.size()) fail(ErrorKind::Store, "truncated tuple encoding");
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
  pos += 4;
  if (pos + n > data.size()) fail(ErrorKind::Store, "truncated tuple encoding");
  std::string s(reinterpret_cast<const char*>(data.data() + pos), n);
  pos += n;
  return s;
}

}  // namespace

Bytes encode_tuple(const TupleRecord& row, bool fake) {
  Bytes out;
  out.push_back(fake ? 1 : 0);
  out.push_back(row.sensitive ? 1 : 0);
  put_bytes(out, row.tuple_id);
  std::uint32_t n = static_cast<std::uint32_t>(row.attrs.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((n >> (8 * i)) & 0xff));
  for (const auto& [attr, value] : row.attrs) {
    put_bytes(out, attr);
    put_bytes(out, value);
  }
  return out;
}

std::pair<TupleRecord, bool> decode_tuple(std::span<const std::uint8_t> data) {
  if (data.size() < 2) fail(ErrorKind::Store, "truncated tuple encoding");
  bool fake = data[0] != 0;
  TupleRecord row;
  row.sensitive = data[1] != 0;
  std::size_t pos = 2;
  row.tuple_id = take_bytes(data, pos);
  if (pos + 4 > data.size()) fail(ErrorKind::Store, "truncated tuple encoding");
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
  pos += 4;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string attr = take_bytes(data, pos);
    std::string value = take_bytes(data, pos);
    row.attrs.emplace_back(std::move(attr), std::move(value));
  }
  return {std::move(row), fake};
}

std::uint64_t OccurrenceHistogram::count(const std::string& attribute,
                                         const std::string& value) const {
  auto a = counts.find(attribute);
  if (a == counts.end()) return 0;
  auto v = a->second.find(value);
  return v == a->second.end() ? 0 : v->second;
}

std::uint64_t CloudStore::begin_query() {
  std::lock_guard<std::mutex> guard(log_mutex_);
  return next_seq_++;
}

void CloudStore::append_av(AvEntry entry) {
  std::lock_guard<std::mutex> guard(log_mutex_);
  av_log_.push_back(std::move(entry));
}

bool CloudStore::has_encrypted_segment(const std::string& name) const {
  return encrypted_.count(name) > 0;
}

bool CloudStore::has_cleartext_segment(const std::string& name) const {
  return cleartext_.count(name) > 0;
}

const CloudStore::EncryptedSegment& CloudStore::encrypted_segment(
    const std::string& name) const {
  auto it = encrypted_.find(name);
  if (it == encrypted_.end()) fail(ErrorKind::Store, "no encrypted segment '" + name + "'");
  return it->second;
}

const CloudStore::CleartextSegment& CloudStore::cleartext_segment(
    const std::string& name) const {
  auto it = cleartext_.find(name);
  if (it == cleartext_.end()) fail(ErrorKind::Store, "no cleartext segment '" + name + "'");
  return it->second;
}

void CloudStore::add_encrypted_segment(const std::string& name, EncryptedSegment segment) {
  encrypted_[name] = std::move(segment);
}

void CloudStore::add_cleartext_segment(const std::string& name, CleartextSegment segment) {
  cleartext_[name] = std::move(segment);
}

std::vector<EncryptedRecord> CloudStore::fetch_sensitive(const std::string& segment,
                                                         const std::vector<Token>& tokens,
                                                         std::uint64_t query_seq,
                                                         const std::string& op) {
  const EncryptedSegment& seg = encrypted_segment(segment);
  std::vector<EncryptedRecord> out;
  std::set<std::uint32_t> seen;
  AvEntry entry;
  entry.query_seq = query_seq;
  entry.side = Side::Sensitive;
  entry.op = op;
  entry.segment = segment;
  for (const Token& token : tokens) {
    std::string hex = token_hex(token);
    entry.request.push_back(hex);
    auto it = seg.token_index.find(hex);
    if (it == seg.token_index.end()) continue;
    for (std::uint32_t idx : it->second) {
      if (!seen.insert(idx).second) continue;
      out.push_back(seg.records[idx]);
      entry.returned_ids.push_back(seg.records[idx].record_id);
    }
  }
  std::sort(entry.request.begin(), entry.request.end());
  append_av(std::move(entry));
  return out;
}

std::vector<TupleRecord> CloudStore::fetch_nonsensitive(const std::string& segment,
                                                        const std::string& attribute,
                                                        const std::vector<std::string>& values,
                                                        std::uint64_t query_seq,
                                                        const std::string& op) {
  const CleartextSegment& seg = cleartext_segment(segment);
  std::vector<TupleRecord> out;
  AvEntry entry;
  entry.query_seq = query_seq;
  entry.side = Side::NonSensitive;
  entry.op = op;
  entry.segment = segment;
  std::set<std::uint32_t> seen;
  auto index = seg.value_index.find(attribute);
  for (const std::string& value : values) {
    entry.request.push_back(value);
    if (index == seg.value_index.end()) continue;
    auto it = index->second.find(value);
    if (it == index->second.end()) continue;
    for (std::uint32_t idx : it->second) {
      if (!seen.insert(idx).second) continue;
      out.push_back(seg.rows[idx]);
      entry.returned_ids.push_back(seg.rows[idx].tuple_id);
    }
  }
  std::sort(entry.request.begin(), entry.request.end());
  append_av(std::move(entry));
  return out;
}

std::vector<EncryptedRecord> CloudStore::fetch_all_encrypted(const std::string& segment,
                                                             std::uint64_t query_seq,
                                                             const std::string& op) {
  const EncryptedSegment& seg = encrypted_segment(segment);
  AvEntry entry;
  entry.query_seq = query_seq;
  entry.side = Side::Sensitive;
  entry.op = op;
  entry.segment = segment;
  entry.request.push_back("*");
  for (const auto& rec : seg.records) entry.returned_ids.push_back(rec.record_id);
  append_av(std::move(entry));
  return seg.records;
}

std::vector<TupleRecord> CloudStore::fetch_all_cleartext(const std::string& segment,
                                                         std::uint64_t query_seq,
                                                         const std::string& op) {
  const CleartextSegment& seg = cleartext_segment(segment);
  AvEntry entry;
  entry.query_seq = query_seq;
  entry.side = Side::NonSensitive;
  entry.op = op;
  entry.segment = segment;
  entry.request.push_back("*");
  for (const auto& row : seg.rows) entry.returned_ids.push_back(row.tuple_id);
  append_av(std::move(entry));
  return seg.rows;
}

std::string layout_hash(const BinLayout& layout) {
  return sha256_hex(layout_to_json(layout));
}

OutsourceResult outsource(const BinLayout& layout, const PartitionedRelation& part,
                          const OwnerKey& key, const std::vector<FakePadding>& extra_fakes) {
  OutsourceResult result;
  result.store = std::make_shared<CloudStore>();
  result.layout_hash = layout_hash(layout);
  result.store->manifest_layout_hash = result.layout_hash;
  result.store->manifest_key_fingerprint = key.fingerprint();
  result.store->manifest_extra["cipher"] = "aes-256-gcm";
  result.store->manifest_extra["token_prf"] = "hmac-sha256";

  const std::string& attr = part.search_attribute;

  CloudStore::EncryptedSegment enc;
  auto add_encrypted = [&](const TupleRecord& row, bool fake) {
    std::uint32_t idx = static_cast<std::uint32_t>(enc.records.size());
    EncryptedRecord rec;
    rec.record_id = "e" + std::to_string(idx);
    Bytes plain = encode_tuple(row, fake);
    rec.ciphertext = aead_encrypt(key, plain);
    const std::string& value = row.attr(attr);
    std::uint64_t occurrence = ++result.histogram.counts[attr][value];
    enc.records.push_back(std::move(rec));
    enc.token_index[token_hex(occurrence_token(key, attr, value, occurrence))].push_back(idx);
  };

  for (const auto& row : part.sensitive_tuples) {
    add_encrypted(row, false);
  }
  // Fake markers sitting in bins carry one tuple each; padding entries carry
  // their recorded tuple count.
  auto add_fakes = [&](const std::string& marker, std::uint64_t count) {
    for (std::uint64_t k = 0; k < count; ++k) {
      TupleRecord fake;
      fake.tuple_id = "fake:" + std::to_string(enc.records.size());
      fake.sensitive = true;
      fake.attrs.emplace_back(attr, marker);
      add_encrypted(fake, true);
    }
  };
  for (const auto& bin : layout.sensitive_bins) {
    for (const auto& value : bin) {
      if (is_fake_value(value)) add_fakes(value, 1);
    }
  }
  for (const auto& bin : layout.fake_padding) {
    for (const auto& fake : bin) add_fakes(fake.value, fake.tuple_count);
  }
  for (const auto& fake : extra_fakes) add_fakes(fake.value, fake.tuple_count);
  result.store->add_encrypted_segment("sensitive", std::move(enc));

  CloudStore::CleartextSegment clear;
  clear.schema = part.schema;
  clear.rows = part.nonsensitive_tuples;
  for (std::uint32_t i = 0; i < clear.rows.size(); ++i) {
    clear.value_index[attr][clear.rows[i].attr(attr)].push_back(i);
  }
  result.store->add_cleartext_segment("nonsensitive", std::move(clear));
  result.store->manifest_extra["search_attribute"] = attr;
  return result;
}

namespace {

std::string segment_file(const std::string& dir, const std::string& name,
                         const char* suffix) {
  // The primary selection segments keep the historical flat filenames.
  if (name == "sensitive" && std::string(suffix) == ".bin") return dir + "/sensitive.bin";
  if (name == "sensitive" && std::string(suffix) == ".tokens.idx") return dir + "/tokens.idx";
  if (name == "nonsensitive" && std::string(suffix) == ".csv") {
    return dir + "/nonsensitive.csv";
  }
  return dir + "/" + name + suffix;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Store, "cannot write '" + path + "'");
  out << content;
}

std::string read_whole(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Store, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

void CloudStore::save(const std::string& dir) const {
  fs::create_directories(dir);

  json manifest;
  manifest["format"] = "qbin-store";
  manifest["layout_hash"] = manifest_layout_hash;
  manifest["key_fingerprint"] = manifest_key_fingerprint;
  for (const auto& [k, v] : manifest_extra) manifest[k] = v;
  json enc_names = json::array(), clear_names = json::array();
  for (const auto& [name, _] : encrypted_) enc_names.push_back(name);
  for (const auto& [name, _] : cleartext_) clear_names.push_back(name);
  manifest["encrypted_segments"] = enc_names;
  manifest["cleartext_segments"] = clear_names;
  manifest["av_entries"] = av_log_.size();
  write_file(dir + "/manifest", manifest.dump(2) + "\n");

  for (const auto& [name, seg] : encrypted_) {
    std::string blob;
    for (const auto& rec : seg.records) {
      put_u32(blob, static_cast<std::uint32_t>(rec.ciphertext.size()));
      blob.append(reinterpret_cast<const char*>(rec.ciphertext.data()),
                  rec.ciphertext.size());
    }
    write_file(segment_file(dir, name, ".bin"), blob);

    // token -> record offsets, sorted for reproducible files
    std::vector<std::pair<std::string, std::vector<std::uint32_t>>> entries(
        seg.token_index.begin(), seg.token_index.end());
    std::sort(entries.begin(), entries.end());
    std::string idx;
    put_u32(idx, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [hex, offsets] : entries) {
      put_u32(idx, static_cast<std::uint32_t>(hex.size()));
      idx += hex;
      put_u32(idx, static_cast<std::uint32_t>(offsets.size()));
      for (auto o : offsets) put_u32(idx, o);
    }
    write_file(segment_file(dir, name, ".tokens.idx"), idx);
  }

  for (const auto& [name, seg] : cleartext_) {
    write_file(segment_file(dir, name, ".csv"), to_canonical_csv(seg.rows, seg.schema));
    json meta;
    meta["schema"] = seg.schema;
    json attrs = json::array();
    for (const auto& [a, _] : seg.value_index) attrs.push_back(a);
    meta["indexed_attributes"] = attrs;
    write_file(segment_file(dir, name, ".idx.json"), meta.dump() + "\n");
  }

  std::string log;
  for (const auto& entry : av_log_) {
    json j;
    j["seq"] = entry.query_seq;
    j["side"] = entry.side == Side::Sensitive ? "sensitive" : "nonsensitive";
    j["op"] = entry.op;
    j["segment"] = entry.segment;
    j["request"] = entry.request;
    j["returned"] = entry.returned_ids;
    std::string line = j.dump();
    put_u32(log, static_cast<std::uint32_t>(line.size()));
    log += line;
  }
  write_file(dir + "/av.log", log);
}

std::shared_ptr<CloudStore> CloudStore::load(const std::string& dir) {
  auto store_ptr = std::make_shared<CloudStore>();
  CloudStore& store = *store_ptr;
  json manifest = json::parse(read_whole(dir + "/manifest"));
  if (manifest.value("format", "") != "qbin-store") {
    fail(ErrorKind::Integrity, "'" + dir + "' is not a store directory");
  }
  store.manifest_layout_hash = manifest.value("layout_hash", "");
  store.manifest_key_fingerprint = manifest.value("key_fingerprint", "");
  for (const auto& [k, v] : manifest.items()) {
    if (v.is_string() && k != "layout_hash" && k != "key_fingerprint" && k != "format") {
      store.manifest_extra[k] = v.get<std::string>();
    }
  }

  for (const auto& name_json : manifest.at("encrypted_segments")) {
    std::string name = name_json.get<std::string>();
    EncryptedSegment seg;
    std::string blob = read_whole(segment_file(dir, name, ".bin"));
    std::size_t pos = 0;
    while (pos < blob.size()) {
      std::uint32_t len = get_u32(blob, pos);
      if (pos + len > blob.size()) fail(ErrorKind::Store, "truncated ciphertext record");
      EncryptedRecord rec;
      rec.record_id = "e" + std::to_string(seg.records.size());
      rec.ciphertext.assign(blob.begin() + pos, blob.begin() + pos + len);
      pos += len;
      seg.records.push_back(std::move(rec));
    }
    std::string idx = read_whole(segment_file(dir, name, ".tokens.idx"));
    pos = 0;
    std::uint32_t n = get_u32(idx, pos);
    for (std::uint32_t i = 0; i < n; ++i) {
      std::uint32_t hex_len = get_u32(idx, pos);
      if (pos + hex_len > idx.size()) fail(ErrorKind::Store, "truncated token index");
      std::string hex = idx.substr(pos, hex_len);
      pos += hex_len;
      std::uint32_t cnt = get_u32(idx, pos);
      std::vector<std::uint32_t> offsets(cnt);
      for (std::uint32_t k = 0; k < cnt; ++k) offsets[k] = get_u32(idx, pos);
      seg.token_index[hex] = std::move(offsets);
    }
    store.encrypted_[name] = std::move(seg);
  }

  for (const auto& name_json : manifest.at("cleartext_segments")) {
    std::string name = name_json.get<std::string>();
    CleartextSegment seg;
    json meta = json::parse(read_whole(segment_file(dir, name, ".idx.json")));
    seg.schema = meta.at("schema").get<std::vector<std::string>>();
    auto rows = parse_csv(read_whole(segment_file(dir, name, ".csv")));
    seg.rows = records_from_csv(rows, SensitivitySource::flag_column("sens"),
                                std::string("tuple_id"));
    for (const auto& attr_json : meta.at("indexed_attributes")) {
      std::string attr = attr_json.get<std::string>();
      for (std::uint32_t i = 0; i < seg.rows.size(); ++i) {
        seg.value_index[attr][seg.rows[i].attr(attr)].push_back(i);
      }
    }
    store.cleartext_[name] = std::move(seg);
  }

  std::string log = read_whole(dir + "/av.log");
  std::size_t pos = 0;
  while (pos < log.size()) {
    std::uint32_t len = get_u32(log, pos);
    if (pos + len > log.size()) fail(ErrorKind::Store, "truncated av.log entry");
    json j = json::parse(log.substr(pos, len));
    pos += len;
    AvEntry entry;
    entry.query_seq = j.at("seq").get<std::uint64_t>();
    entry.side = j.at("side").get<std::string>() == "sensitive" ? Side::Sensitive
                                                                : Side::NonSensitive;
    entry.op = j.value("op", "selection");
    entry.segment = j.value("segment", "");
    entry.request = j.at("request").get<std::vector<std::string>>();
    entry.returned_ids = j.at("returned").get<std::vector<std::string>>();
    store.next_seq_ = std::max(store.next_seq_, entry.query_seq + 1);
    store.av_log_.push_back(std::move(entry));
  }
  return store_ptr;
}

}  // namespace qbin
