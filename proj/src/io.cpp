#include "prognos/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "prognos/binio.hpp"

namespace prognos::io {

namespace {

constexpr char kEmbeddingMagic[9] = "PRGNEMBD";
constexpr std::uint32_t kEmbeddingVersion = 1;

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : s) {
    if (c == delim) {
      parts.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  parts.push_back(current);
  return parts;
}

std::optional<double> parse_optional_time(const std::string& raw, int line,
                                          const std::string& column) {
  std::string v = trim(raw);
  if (v.empty()) return std::nullopt;
  char* end = nullptr;
  double value = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ValidationError("row " + std::to_string(line) + ": malformed " + column + " '" +
                          v + "'");
  return value;
}

const std::vector<std::string> kCohortColumns = {
    "subject_id", "age",      "er",           "pr",           "her2",
    "t_stage",    "n_stage",  "idc",          "ilc",          "grade",
    "race",       "oncotype", "lrr_time",     "distant_time", "death_time",
    "followup_time", "slides"};

}  // namespace

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Cohort read_cohort_csv(const std::filesystem::path& file) {
  return read_cohort_csv(file, file.stem().string());
}

Cohort read_cohort_csv(const std::filesystem::path& file, const std::string& dataset_id) {
  std::ifstream in(file);
  if (!in) throw MissingArtifactError("cannot open cohort table '" + file.string() + "'");

  std::string header;
  if (!std::getline(in, header))
    throw ValidationError("cohort table '" + file.string() + "' is empty");
  std::vector<std::string> columns = split(trim(header), ',');
  std::map<std::string, int> column_index;
  for (int i = 0; i < static_cast<int>(columns.size()); ++i)
    column_index[trim(columns[i])] = i;
  for (const auto& required : kCohortColumns)
    if (!column_index.count(required))
      throw ValidationError("cohort table '" + file.string() + "' misses column '" +
                            required + "'");

  Cohort cohort;
  cohort.dataset_id = dataset_id;
  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split(line, ',');
    if (cells.size() != columns.size())
      throw ValidationError("row " + std::to_string(line_no) + ": expected " +
                            std::to_string(columns.size()) + " cells, found " +
                            std::to_string(cells.size()));
    auto cell = [&](const std::string& name) { return trim(cells[column_index.at(name)]); };

    SubjectRecord subject;
    subject.subject_id = cell("subject_id");
    subject.dataset_id = dataset_id;
    if (subject.subject_id.empty())
      throw ValidationError("row " + std::to_string(line_no) + ": empty subject_id");
    if (!seen_ids.insert(subject.subject_id).second)
      throw ValidationError("duplicate subject_id '" + subject.subject_id + "' in dataset '" +
                            dataset_id + "'");

    try {
      auto age = parse_optional_time(cell("age"), line_no, "age");
      if (!age) throw ValidationError("row " + std::to_string(line_no) + ": missing age");
      subject.clinical.age = *age;
      subject.clinical.er = receptor_from_string(cell("er"));
      subject.clinical.pr = receptor_from_string(cell("pr"));
      subject.clinical.her2 = her2_from_string(cell("her2"));
      subject.clinical.t_stage = t_stage_from_string(cell("t_stage"));
      subject.clinical.n_stage = n_stage_from_string(cell("n_stage"));
      subject.clinical.idc = yes_no_from_string(cell("idc"));
      subject.clinical.ilc = yes_no_from_string(cell("ilc"));
      if (!cell("grade").empty()) subject.clinical.grade = std::stoi(cell("grade"));
      if (!cell("race").empty()) subject.clinical.race = race_from_string(cell("race"));
      if (auto v = parse_optional_time(cell("oncotype"), line_no, "oncotype"))
        subject.clinical.oncotype_score = v;
      subject.clinical.validate();

      subject.outcome.local_regional_recurrence_time =
          parse_optional_time(cell("lrr_time"), line_no, "lrr_time");
      subject.outcome.distant_recurrence_time =
          parse_optional_time(cell("distant_time"), line_no, "distant_time");
      subject.outcome.death_time = parse_optional_time(cell("death_time"), line_no, "death_time");
      subject.outcome.last_followup_time =
          parse_optional_time(cell("followup_time"), line_no, "followup_time");
      subject.outcome.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("dataset '" + dataset_id + "' row " + std::to_string(line_no) +
                            ": " + e.what());
    }

    for (const auto& slide : split(cell("slides"), ';'))
      if (!trim(slide).empty()) subject.embedding_refs.push_back(trim(slide));

    cohort.subjects.push_back(std::move(subject));
  }
  return cohort;
}

CohortSet read_cohort_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw MissingArtifactError("cohort directory '" + dir.string() + "' does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw MissingArtifactError("no cohort tables under '" + dir.string() + "'");
  CohortSet set;
  for (const auto& file : files) set.cohorts.push_back(read_cohort_csv(file));
  return set;
}

void write_cohort_csv(const Cohort& cohort, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ValidationError("cannot write cohort table '" + file.string() + "'");
  for (std::size_t i = 0; i < kCohortColumns.size(); ++i)
    out << kCohortColumns[i] << (i + 1 < kCohortColumns.size() ? ',' : '\n');
  auto opt = [](const std::optional<double>& v) { return v ? fmt_double(*v) : ""; };
  for (const auto& s : cohort.subjects) {
    out << s.subject_id << ',' << fmt_double(s.clinical.age) << ',' << to_string(s.clinical.er)
        << ',' << to_string(s.clinical.pr) << ',' << to_string(s.clinical.her2) << ','
        << to_string(s.clinical.t_stage) << ',' << to_string(s.clinical.n_stage) << ','
        << to_string(s.clinical.idc) << ',' << to_string(s.clinical.ilc) << ','
        << (s.clinical.grade ? std::to_string(*s.clinical.grade) : "") << ','
        << (s.clinical.race ? to_string(*s.clinical.race) : "") << ','
        << (s.clinical.oncotype_score ? fmt_double(*s.clinical.oncotype_score) : "") << ','
        << opt(s.outcome.local_regional_recurrence_time) << ','
        << opt(s.outcome.distant_recurrence_time) << ',' << opt(s.outcome.death_time) << ','
        << opt(s.outcome.last_followup_time) << ',';
    for (std::size_t k = 0; k < s.embedding_refs.size(); ++k)
      out << s.embedding_refs[k] << (k + 1 < s.embedding_refs.size() ? ";" : "");
    out << '\n';
  }
}

std::string cohort_summary_tsv(const CohortSet& cohorts) {
  std::ostringstream out;
  out << "dataset\tfield\tcategory\tcount\n";
  for (const auto& cohort : cohorts.cohorts) {
    std::map<std::string, long> counts;
    long events = 0;
    for (const auto& s : cohort.subjects) {
      ++counts["er\t" + std::string(to_string(s.clinical.er))];
      ++counts["pr\t" + std::string(to_string(s.clinical.pr))];
      ++counts["her2\t" + std::string(to_string(s.clinical.her2))];
      ++counts["t_stage\t" + std::string(to_string(s.clinical.t_stage))];
      ++counts["n_stage\t" + std::string(to_string(s.clinical.n_stage))];
      ++counts["idc\t" + std::string(to_string(s.clinical.idc))];
      ++counts["ilc\t" + std::string(to_string(s.clinical.ilc))];
      ++counts[std::string("race\t") + (s.clinical.race ? to_string(*s.clinical.race) : "missing")];
      ++counts[std::string("grade\t") +
               (s.clinical.grade ? std::to_string(*s.clinical.grade) : "missing")];
      ++counts[std::string("oncotype\t") + (s.clinical.oncotype_score ? "present" : "missing")];
      if (s.outcome.local_regional_recurrence_time || s.outcome.distant_recurrence_time)
        ++events;
    }
    counts["any_recurrence\tyes"] = events;
    counts["subjects\ttotal"] = static_cast<long>(cohort.subjects.size());
    for (const auto& [key, count] : counts)
      out << cohort.dataset_id << '\t' << key << '\t' << count << '\n';
  }
  return out.str();
}

void write_embedding_file(const EmbeddingBag& bag, const std::filesystem::path& dir) {
  bag.validate();
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / bag.slide_id, std::ios::binary);
  if (!out) throw ValidationError("cannot write embedding file for '" + bag.slide_id + "'");
  binio::write_magic(out, kEmbeddingMagic);
  binio::write_u32(out, kEmbeddingVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(bag.n_patches()));
  binio::write_u32(out, static_cast<std::uint32_t>(bag.dim()));
  for (int i = 0; i < bag.n_patches(); ++i)
    for (int j = 0; j < bag.dim(); ++j) binio::write_f32(out, bag.vectors(i, j));
}

EmbeddingBag read_embedding_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw MissingArtifactError("missing embedding file '" + file.string() + "'");
  binio::expect_magic(in, kEmbeddingMagic, "embedding");
  std::uint32_t version = binio::read_u32(in);
  if (version != kEmbeddingVersion)
    throw ValidationError("unsupported embedding version " + std::to_string(version));
  std::uint32_t n_patches = binio::read_u32(in);
  std::uint32_t dim = binio::read_u32(in);
  EmbeddingBag bag;
  bag.slide_id = file.filename().string();
  bag.vectors.resize(n_patches, dim);
  for (std::uint32_t i = 0; i < n_patches; ++i)
    for (std::uint32_t j = 0; j < dim; ++j) bag.vectors(i, j) = binio::read_f32(in);
  bag.validate();
  return bag;
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& dir,
                                    const std::set<std::string>& slide_ids) {
  EmbeddingStore store;
  for (const auto& slide_id : slide_ids) {
    auto file = dir / slide_id;
    if (!std::filesystem::exists(file))
      throw MissingArtifactError("missing embedding file for slide '" + slide_id + "' under '" +
                                 dir.string() + "'");
    store.add(read_embedding_file(file));
  }
  return store;
}

void EmbeddingStore::add(EmbeddingBag bag) {
  std::string id = bag.slide_id;
  bags_.insert_or_assign(std::move(id), std::move(bag));
}

const EmbeddingBag* EmbeddingStore::find(const std::string& slide_id) const {
  auto it = bags_.find(slide_id);
  return it == bags_.end() ? nullptr : &it->second;
}

const EmbeddingBag& EmbeddingStore::get(const std::string& slide_id) const {
  const EmbeddingBag* bag = find(slide_id);
  if (!bag) throw MissingArtifactError("no embedding loaded for slide '" + slide_id + "'");
  return *bag;
}

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingArtifactError("cannot open config '" + file.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_string(text.str());
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
  KeyValueConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": expected key = value");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
    config.values_[key] = value;
  }
  return config;
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("config misses required key '" + key + "'");
  return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  return std::stod(get(key));
}

long KeyValueConfig::get_long(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  return std::stol(get(key));
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("config key '" + key + "': expected boolean, found '" + v + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  if (!has(key)) return out;
  for (const auto& part : split(get(key), ',')) {
    std::string v = trim(part);
    if (!v.empty()) out.push_back(v);
  }
  return out;
}

std::filesystem::path KeyValueConfig::get_path(const std::string& key) const {
  return resolve_path(get(key));
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

std::string KeyValueConfig::canonical() const {
  std::ostringstream out;
  for (const auto& [key, value] : values_) out << key << " = " << value << '\n';
  return out.str();
}

std::string KeyValueConfig::canonical_without(
    const std::vector<std::string>& excluded_keys) const {
  std::ostringstream out;
  for (const auto& [key, value] : values_) {
    if (std::find(excluded_keys.begin(), excluded_keys.end(), key) != excluded_keys.end())
      continue;
    out << key << " = " << value << '\n';
  }
  return out.str();
}

std::filesystem::path resolve_path(const std::string& value) {
  std::filesystem::path p(value);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("PROGNOS_DATA_DIR"))
    return std::filesystem::path(root) / p;
  return p;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
    throw NumericalError("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string sha256_hex_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot hash missing file '" + file.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return sha256_hex(buffer.str());
}

void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / ("manifest_" + manifest.command + ".txt"));
  if (!out) throw ValidationError("cannot write run manifest");
  out << "format = prognos-manifest/1\n";
  out << "command = " << manifest.command << '\n';
  out << "config_hash = " << manifest.config_hash << '\n';
  out << "seed = " << manifest.seed << '\n';
  for (const auto& [label, hash] : manifest.inputs)
    out << "input." << label << " = " << hash << '\n';
  for (const auto& output : manifest.outputs) out << "output = " << output << '\n';
}

void check_out_dir(const std::filesystem::path& out_dir, const std::string& command,
                   const std::string& config_hash) {
  auto manifest = out_dir / ("manifest_" + command + ".txt");
  if (!std::filesystem::exists(manifest)) return;
  KeyValueConfig previous = KeyValueConfig::parse_file(manifest);
  if (previous.get_or("config_hash", "") != config_hash)
    throw ValidationError("output directory '" + out_dir.string() +
                          "' holds results of '" + command +
                          "' with a different config; refusing to overwrite");
}

}  // namespace prognos::io
