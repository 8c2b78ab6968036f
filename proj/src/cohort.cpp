#include "tham/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "tham/error.hpp"
#include "tham/rng.hpp"

namespace tham {

using nlohmann::json;

CodeId Vocab::add(std::string_view id) {
  auto it = index_.find(std::string(id));
  if (it != index_.end()) return it->second;
  const auto index = static_cast<CodeId>(ids_.size());
  ids_.emplace_back(id);
  index_.emplace(ids_.back(), index);
  return index;
}

CodeId Vocab::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? kUnk : it->second;
}

Cohort Cohort::subset(std::span<const std::size_t> patient_indices) const {
  Cohort out;
  out.codes = codes;
  out.drugs = drugs;
  out.patients.reserve(patient_indices.size());
  for (std::size_t i : patient_indices) out.patients.push_back(patients.at(i));
  return out;
}

std::string_view task_name(Task task) {
  return task == Task::Diagnosis ? "diagnosis" : "heart_failure";
}

Task parse_task(std::string_view name) {
  if (name == "diagnosis") return Task::Diagnosis;
  if (name == "heart_failure" || name == "hf") return Task::HeartFailure;
  fail(ErrorKind::Config, "unknown task '" + std::string(name) +
                              "' (expected diagnosis or heart_failure)");
}

std::int64_t parse_day(std::string_view date) {
  auto number = [&](std::size_t pos, std::size_t len) {
    int value = 0;
    if (date.size() < pos + len) fail(ErrorKind::Parse, "bad date '" + std::string(date) + "'");
    auto [ptr, ec] = std::from_chars(date.data() + pos, date.data() + pos + len, value);
    if (ec != std::errc() || ptr != date.data() + pos + len) {
      fail(ErrorKind::Parse, "bad date '" + std::string(date) + "'");
    }
    return value;
  };
  if (date.size() < 10 || date[4] != '-' || date[7] != '-') {
    fail(ErrorKind::Parse, "bad date '" + std::string(date) + "' (expected YYYY-MM-DD)");
  }
  using namespace std::chrono;
  const year_month_day ymd{year{number(0, 4)}, month{static_cast<unsigned>(number(5, 2))},
                           day{static_cast<unsigned>(number(8, 2))}};
  if (!ymd.ok()) fail(ErrorKind::Parse, "invalid calendar date '" + std::string(date) + "'");
  return sys_days{ymd}.time_since_epoch().count();
}

namespace {

void append_unique(std::vector<CodeId>& into, CodeId id) {
  if (std::find(into.begin(), into.end(), id) == into.end()) into.push_back(id);
}

}  // namespace

std::size_t normalize_visits(Patient& patient) {
  auto& visits = patient.visits;
  std::stable_sort(visits.begin(), visits.end(),
                   [](const Visit& a, const Visit& b) { return a.admit_day < b.admit_day; });
  std::vector<Visit> merged;
  std::size_t merges = 0;
  for (auto& v : visits) {
    if (!merged.empty() && merged.back().admit_day == v.admit_day) {
      for (CodeId c : v.codes) append_unique(merged.back().codes, c);
      for (CodeId d : v.drugs) append_unique(merged.back().drugs, d);
      ++merges;
    } else {
      merged.push_back(std::move(v));
    }
  }
  visits = std::move(merged);
  patient.intervals.assign(visits.size(), 0);
  for (std::size_t t = 1; t < visits.size(); ++t) {
    patient.intervals[t] = visits[t].admit_day - visits[t - 1].admit_day;
  }
  return merges;
}

Patient parse_patient_json(std::string_view line, Vocab& codes, Vocab& drugs, bool grow,
                           std::vector<std::string>* unknown) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, e.what());
  }
  auto require = [&](const json& obj, const char* key) -> const json& {
    if (!obj.is_object() || !obj.contains(key)) {
      fail(ErrorKind::Parse, std::string("missing field '") + key + "'");
    }
    return obj.at(key);
  };
  Patient p;
  const json& id = require(doc, "patient_id");
  p.id = id.is_string() ? id.get<std::string>() : id.dump();
  const json& visits = require(doc, "visits");
  if (!visits.is_array()) fail(ErrorKind::Parse, "'visits' must be an array");
  for (const json& jv : visits) {
    Visit v;
    if (jv.contains("admit_day")) {
      if (!jv.at("admit_day").is_number_integer()) {
        fail(ErrorKind::Parse, "'admit_day' must be an integer");
      }
      v.admit_day = jv.at("admit_day").get<std::int64_t>();
    } else if (jv.contains("admit_time")) {
      if (!jv.at("admit_time").is_string()) fail(ErrorKind::Parse, "'admit_time' must be a string");
      v.admit_day = parse_day(jv.at("admit_time").get<std::string>());
    } else {
      fail(ErrorKind::Parse, "visit needs 'admit_day' or 'admit_time'");
    }
    const json& jc = require(jv, "codes");
    if (!jc.is_array() || jc.empty()) fail(ErrorKind::Parse, "'codes' must be a nonempty array");
    for (const json& c : jc) {
      if (!c.is_string()) fail(ErrorKind::Parse, "codes must be strings");
      const auto s = c.get<std::string>();
      CodeId idx = grow ? codes.add(s) : codes.find(s);
      if (idx == Vocab::kUnk && unknown) unknown->push_back(s);
      append_unique(v.codes, idx);
    }
    if (jv.contains("drugs")) {
      const json& jd = jv.at("drugs");
      if (!jd.is_array()) fail(ErrorKind::Parse, "'drugs' must be an array");
      for (const json& d : jd) {
        if (!d.is_string()) fail(ErrorKind::Parse, "drugs must be strings");
        CodeId idx = grow ? drugs.add(d.get<std::string>()) : drugs.find(d.get<std::string>());
        if (idx != Vocab::kUnk) append_unique(v.drugs, idx);
      }
    }
    p.visits.push_back(std::move(v));
  }
  return p;
}

Cohort load_jsonl(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open cohort file " + path.string());
  Cohort cohort;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Patient p;
    try {
      p = parse_patient_json(line, cohort.codes, cohort.drugs, true);
    } catch (const Error& e) {
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (p.visits.empty()) {
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) +
                                 ": patient has no visits");
    }
    const std::size_t merged = normalize_visits(p);
    if (merged > 0 && warnings) {
      warnings->push_back("patient " + p.id + ": merged " + std::to_string(merged) +
                          " same-day visit(s)");
    }
    cohort.patients.push_back(std::move(p));
  }
  return cohort;
}

std::string to_jsonl(const Cohort& cohort) {
  std::string out;
  for (const Patient& p : cohort.patients) {
    nlohmann::ordered_json doc;
    doc["patient_id"] = p.id;
    doc["visits"] = nlohmann::ordered_json::array();
    for (const Visit& v : p.visits) {
      nlohmann::ordered_json jv;
      jv["admit_day"] = v.admit_day;
      auto& jc = jv["codes"] = nlohmann::ordered_json::array();
      for (CodeId c : v.codes) jc.push_back(cohort.codes.id(c));
      auto& jd = jv["drugs"] = nlohmann::ordered_json::array();
      for (CodeId d : v.drugs) jd.push_back(cohort.drugs.id(d));
      doc["visits"].push_back(std::move(jv));
    }
    out += doc.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << to_jsonl(cohort);
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        quoted = true;
        field_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
        break;
      case '\r':
        break;
      case '\n':
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
        rows.push_back(std::move(row));
        row.clear();
        break;
      default:
        field += ch;
        field_started = true;
    }
  }
  if (quoted) fail(ErrorKind::Parse, path.string() + ": unterminated quoted field");
  if (field_started || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  // Blank lines carry no record.
  std::erase_if(rows, [](const auto& r) { return r.size() == 1 && r[0].empty(); });
  return rows;
}

namespace {

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

struct Table {
  std::vector<std::vector<std::string>> rows;
  std::map<std::string, std::size_t> columns;
  std::string name;

  std::size_t column(std::initializer_list<const char*> names) const {
    for (const char* n : names) {
      auto it = columns.find(n);
      if (it != columns.end()) return it->second;
    }
    fail(ErrorKind::Config, name + ": missing column " + *names.begin());
  }
};

Table load_table(const std::filesystem::path& path) {
  Table t;
  t.name = path.string();
  auto rows = read_csv(path);
  if (rows.empty()) fail(ErrorKind::Config, t.name + ": missing header row");
  for (std::size_t i = 0; i < rows[0].size(); ++i) t.columns.emplace(upper(rows[0][i]), i);
  t.rows.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
  return t;
}

const std::string& cell(const Table& t, const std::vector<std::string>& row, std::size_t col) {
  if (col >= row.size()) fail(ErrorKind::Parse, t.name + ": short row");
  return row[col];
}

}  // namespace

Cohort load_mimic_csv(const std::filesystem::path& admissions,
                      const std::filesystem::path& diagnoses,
                      const std::optional<std::filesystem::path>& prescriptions,
                      std::vector<std::string>* warnings) {
  const Table adm = load_table(admissions);
  const Table diag = load_table(diagnoses);
  const std::size_t a_subject = adm.column({"SUBJECT_ID"});
  const std::size_t a_hadm = adm.column({"HADM_ID"});
  const std::size_t a_time = adm.column({"ADMITTIME"});
  const std::size_t d_hadm = diag.column({"HADM_ID"});
  const std::size_t d_code = diag.column({"ICD9_CODE", "ICD_CODE"});
  diag.column({"SUBJECT_ID"});

  // Admission order of appearance in the diagnoses table fixes code order.
  std::map<std::string, std::vector<std::string>> codes_by_hadm;
  for (const auto& row : diag.rows) {
    const std::string& code = cell(diag, row, d_code);
    if (code.empty()) continue;
    auto& list = codes_by_hadm[cell(diag, row, d_hadm)];
    if (std::find(list.begin(), list.end(), code) == list.end()) list.push_back(code);
  }
  std::map<std::string, std::vector<std::string>> drugs_by_hadm;
  if (prescriptions) {
    const Table rx = load_table(*prescriptions);
    const std::size_t r_hadm = rx.column({"HADM_ID"});
    const std::size_t r_drug = rx.column({"DRUG"});
    rx.column({"SUBJECT_ID"});
    for (const auto& row : rx.rows) {
      const std::string& drug = cell(rx, row, r_drug);
      if (drug.empty()) continue;
      auto& list = drugs_by_hadm[cell(rx, row, r_hadm)];
      if (std::find(list.begin(), list.end(), drug) == list.end()) list.push_back(drug);
    }
  }

  struct RawVisit {
    std::int64_t day;
    std::string hadm;
  };
  std::map<std::string, std::vector<RawVisit>> by_subject;
  std::vector<std::string> subject_order;
  std::size_t dropped = 0;
  for (const auto& row : adm.rows) {
    const std::string& hadm = cell(adm, row, a_hadm);
    if (!codes_by_hadm.count(hadm)) {
      ++dropped;
      continue;
    }
    const std::string& subject = cell(adm, row, a_subject);
    auto [it, inserted] = by_subject.try_emplace(subject);
    if (inserted) subject_order.push_back(subject);
    it->second.push_back({parse_day(cell(adm, row, a_time)), hadm});
  }
  if (dropped > 0 && warnings) {
    warnings->push_back("dropped " + std::to_string(dropped) + " admission(s) without diagnoses");
  }

  Cohort cohort;
  std::size_t excluded = 0;
  for (const std::string& subject : subject_order) {
    auto raw = by_subject[subject];
    std::stable_sort(raw.begin(), raw.end(),
                     [](const RawVisit& a, const RawVisit& b) { return a.day < b.day; });
    // Count distinct days first so single-visit patients never touch the vocabularies.
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (i == 0 || raw[i].day != raw[i - 1].day) ++distinct;
    }
    if (distinct < 2) {
      ++excluded;
      continue;
    }
    Patient p;
    p.id = subject;
    for (const RawVisit& rv : raw) {
      Visit v;
      v.admit_day = rv.day;
      for (const auto& c : codes_by_hadm[rv.hadm]) v.codes.push_back(cohort.codes.add(c));
      if (auto it = drugs_by_hadm.find(rv.hadm); it != drugs_by_hadm.end()) {
        for (const auto& d : it->second) v.drugs.push_back(cohort.drugs.add(d));
      }
      p.visits.push_back(std::move(v));
    }
    normalize_visits(p);
    cohort.patients.push_back(std::move(p));
  }
  if (excluded > 0 && warnings) {
    warnings->push_back("excluded " + std::to_string(excluded) + " patient(s) with fewer than 2 visits");
  }
  return cohort;
}

// ---------------------------------------------------------------------------
// Examples and splits

bool is_heart_failure_code(std::string_view code) { return code.starts_with("428"); }

std::vector<Example> make_examples(const Cohort& cohort, Task task) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < cohort.patients.size(); ++i) {
    const Patient& p = cohort.patients[i];
    if (p.visits.size() < 2) continue;
    Example ex;
    ex.task = task;
    ex.patient = i;
    const std::size_t T = p.visits.size() - 1;
    ex.history.assign(p.visits.begin(), p.visits.begin() + static_cast<std::ptrdiff_t>(T));
    ex.intervals.assign(p.intervals.begin(), p.intervals.begin() + static_cast<std::ptrdiff_t>(T));
    const Visit& last = p.visits.back();
    for (CodeId c : last.codes) {
      if (c == Vocab::kUnk) continue;
      ex.target_codes.push_back(c);
      if (is_heart_failure_code(cohort.codes.id(c))) ex.heart_failure = 1;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

VocabPair collect_vocab(const Cohort& cohort) {
  VocabPair out;
  for (const Patient& p : cohort.patients) {
    for (const Visit& v : p.visits) {
      for (CodeId c : v.codes) {
        if (c != Vocab::kUnk) out.codes.add(cohort.codes.id(c));
      }
      for (CodeId d : v.drugs) {
        if (d != Vocab::kUnk) out.drugs.add(cohort.drugs.id(d));
      }
    }
  }
  return out;
}

Visit reindex(const Visit& visit, const Cohort& source, const Vocab& codes, const Vocab& drugs) {
  Visit out;
  out.admit_day = visit.admit_day;
  for (CodeId c : visit.codes) {
    append_unique(out.codes, c == Vocab::kUnk ? Vocab::kUnk : codes.find(source.codes.id(c)));
  }
  for (CodeId d : visit.drugs) {
    if (d == Vocab::kUnk) continue;
    const CodeId mapped = drugs.find(source.drugs.id(d));
    if (mapped != Vocab::kUnk) append_unique(out.drugs, mapped);
  }
  return out;
}

Cohort reindex(const Cohort& cohort, const Vocab& codes, const Vocab& drugs) {
  Cohort out;
  out.codes = codes;
  out.drugs = drugs;
  out.patients.reserve(cohort.patients.size());
  for (const Patient& p : cohort.patients) {
    Patient q;
    q.id = p.id;
    q.intervals = p.intervals;
    for (const Visit& v : p.visits) q.visits.push_back(reindex(v, cohort, codes, drugs));
    out.patients.push_back(std::move(q));
  }
  return out;
}

Example reindex(const Example& example, const Cohort& source, const Vocab& codes,
                const Vocab& drugs) {
  Example out;
  out.task = example.task;
  out.patient = example.patient;
  out.intervals = example.intervals;
  out.heart_failure = example.heart_failure;
  for (const Visit& v : example.history) out.history.push_back(reindex(v, source, codes, drugs));
  for (CodeId c : example.target_codes) {
    const CodeId mapped = codes.find(source.codes.id(c));
    if (mapped != Vocab::kUnk) out.target_codes.push_back(mapped);
  }
  return out;
}

SplitCounts default_split_counts(std::size_t n) {
  SplitCounts c;
  c.valid = n / 10;
  c.test = n / 10;
  c.train = n - c.valid - c.test;
  return c;
}

Split split(std::vector<Example> examples, SplitCounts counts, std::uint64_t seed) {
  const std::size_t wanted = counts.train + counts.valid + counts.test;
  if (wanted > examples.size()) {
    fail(ErrorKind::Config, "split requests " + std::to_string(wanted) + " examples but only " +
                                std::to_string(examples.size()) + " are available (short by " +
                                std::to_string(wanted - examples.size()) + ")");
  }
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  Split s;
  auto take = [&](std::vector<Example>& into, std::size_t from, std::size_t count) {
    into.reserve(count);
    for (std::size_t k = from; k < from + count; ++k) into.push_back(std::move(examples[order[k]]));
  };
  take(s.train, 0, counts.train);
  take(s.valid, counts.train, counts.valid);
  take(s.test, counts.train + counts.valid, counts.test);
  return s;
}

}  // namespace tham
