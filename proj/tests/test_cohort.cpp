#include <doctest.h>

#include <algorithm>
#include <set>

#include "support.hpp"
#include "tham/cohort.hpp"
#include "tham/error.hpp"

using namespace tham;
using test::temp_dir;
using test::write_text;

namespace {

Cohort load_string(const std::string& jsonl, std::vector<std::string>* warnings = nullptr) {
  const auto dir = temp_dir("cohort");
  write_text(dir / "c.jsonl", jsonl);
  return load_jsonl(dir / "c.jsonl", warnings);
}

int error_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return static_cast<int>(e.kind());
  }
  return 0;
}

}  // namespace

TEST_CASE("jsonl: intervals follow admit days") {
  const Cohort c = load_string(
      R"({"patient_id":"a","visits":[{"admit_day":60,"codes":["x"]},{"admit_day":0,"codes":["y"],"drugs":["d"]}]})"
      "\n");
  REQUIRE(c.patients.size() == 1);
  const Patient& p = c.patients[0];
  CHECK(p.intervals == std::vector<std::int64_t>{0, 60});
  CHECK(p.visits[0].admit_day == 0);
  CHECK(c.codes.id(p.visits[0].codes[0]) == "y");
}

TEST_CASE("jsonl: admit_time dates become day indices") {
  const Cohort c = load_string(
      R"({"patient_id":"a","visits":[{"admit_time":"2010-01-01","codes":["x"]},{"admit_time":"2010-03-02 08:00:00","codes":["x"]}]})"
      "\n");
  CHECK(c.patients[0].intervals[1] == 60);
  CHECK(parse_day("1970-01-02") == 1);
  CHECK(parse_day("2000-03-01") - parse_day("2000-02-28") == 2);  // leap year
}

TEST_CASE("jsonl: shared codes are one vocabulary entry") {
  const Cohort c = load_string(
      R"({"patient_id":"a","visits":[{"admit_day":0,"codes":["4280","1"]},{"admit_day":5,"codes":["4280"]}]})"
      "\n"
      R"({"patient_id":"b","visits":[{"admit_day":0,"codes":["4280"]},{"admit_day":9,"codes":["2"]}]})"
      "\n");
  CHECK(c.codes.size() == 3);
  CHECK(c.codes.ids() == std::vector<std::string>{"4280", "1", "2"});
  for (CodeId i = 0; i < static_cast<CodeId>(c.codes.size()); ++i) {
    CHECK(c.codes.find(c.codes.id(i)) == i);
  }
  CHECK(c.codes.find("nope") == Vocab::kUnk);
}

TEST_CASE("jsonl: same-day visits merge with a warning") {
  std::vector<std::string> warnings;
  const Cohort c = load_string(
      R"({"patient_id":"a","visits":[{"admit_day":3,"codes":["x"],"drugs":["d1"]},{"admit_day":3,"codes":["y","x"],"drugs":["d2"]},{"admit_day":10,"codes":["z"]}]})"
      "\n",
      &warnings);
  const Patient& p = c.patients[0];
  REQUIRE(p.visits.size() == 2);
  CHECK(p.visits[0].codes.size() == 2);
  CHECK(p.visits[0].drugs.size() == 2);
  CHECK(p.intervals == std::vector<std::int64_t>{0, 7});
  CHECK(warnings.size() == 1);
}

TEST_CASE("jsonl: malformed lines report their line number") {
  const auto dir = temp_dir("cohort_bad");
  write_text(dir / "c.jsonl",
             R"({"patient_id":"a","visits":[{"admit_day":0,"codes":["x"]}]})"
             "\n{not json\n");
  try {
    load_jsonl(dir / "c.jsonl");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  write_text(dir / "e.jsonl", R"({"patient_id":"a","visits":[{"admit_day":0,"codes":[]}]})");
  CHECK(error_kind([&] { load_jsonl(dir / "e.jsonl"); }) == static_cast<int>(ErrorKind::Parse));
  CHECK(error_kind([&] { load_jsonl(dir / "missing.jsonl"); }) == static_cast<int>(ErrorKind::Io));
}

TEST_CASE("jsonl: serialization round-trips") {
  const SynthData s = generate(test::small_synth(30, 3));
  const auto dir = temp_dir("cohort_rt");
  write_jsonl(s.cohort, dir / "c.jsonl");
  const Cohort back = load_jsonl(dir / "c.jsonl");
  CHECK(to_jsonl(back) == to_jsonl(s.cohort));
}

TEST_CASE("make_examples: single-visit patients are skipped") {
  const Cohort c = load_string(
      R"({"patient_id":"a","visits":[{"admit_day":0,"codes":["x"]}]})"
      "\n"
      R"({"patient_id":"b","visits":[{"admit_day":0,"codes":["x"]},{"admit_day":4,"codes":["y"]}]})"
      "\n");
  CHECK(c.patients.size() == 2);
  const auto ex = make_examples(c, Task::Diagnosis);
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].patient == 1);
  CHECK(ex[0].history.size() == 1);
  CHECK(ex[0].intervals == std::vector<std::int64_t>{0});
}

TEST_CASE("make_examples: heart-failure label is the 428 prefix") {
  const Cohort c = load_string(
      R"({"patient_id":"a","visits":[{"admit_day":0,"codes":["1"]},{"admit_day":4,"codes":["42822","5849"]}]})"
      "\n"
      R"({"patient_id":"b","visits":[{"admit_day":0,"codes":["4280"]},{"admit_day":4,"codes":["4270"]}]})"
      "\n");
  const auto ex = make_examples(c, Task::HeartFailure);
  CHECK(ex[0].heart_failure == 1);
  CHECK(ex[1].heart_failure == 0);  // history codes do not count
  CHECK(is_heart_failure_code("428"));
  CHECK_FALSE(is_heart_failure_code("V428"));
}

TEST_CASE("make_examples: diagnosis target names the last visit's codes") {
  const Cohort c = load_string(
      R"({"patient_id":"a","visits":[{"admit_day":0,"codes":["c0","c1","c2"]},{"admit_day":4,"codes":["c3"]}]})"
      "\n");
  const auto ex = make_examples(c, Task::Diagnosis);
  CHECK(ex[0].target_codes == std::vector<CodeId>{3});
}

TEST_CASE("split: exact sizes, disjoint, seeded") {
  std::vector<Example> ex(7493);
  for (std::size_t i = 0; i < ex.size(); ++i) ex[i].patient = i;
  const Split a = split(ex, {6000, 500, 993}, 11);
  CHECK(a.train.size() == 6000);
  CHECK(a.valid.size() == 500);
  CHECK(a.test.size() == 993);
  std::set<std::size_t> seen;
  for (const auto* part : {&a.train, &a.valid, &a.test}) {
    for (const auto& e : *part) seen.insert(e.patient);
  }
  CHECK(seen.size() == 7493);

  const Split b = split(ex, {6000, 500, 993}, 11);
  for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].patient == b.test[i].patient);
  const Split other = split(ex, {6000, 500, 993}, 12);
  bool differs = false;
  for (std::size_t i = 0; i < a.test.size(); ++i) differs |= a.test[i].patient != other.test[i].patient;
  CHECK(differs);
}

TEST_CASE("split: boundaries and shortfall") {
  std::vector<Example> ex(10);
  const Split s = split(ex, {10, 0, 0}, 0);
  CHECK(s.train.size() == 10);
  CHECK(s.valid.empty());
  CHECK(s.test.empty());
  try {
    split(ex, {8, 2, 3}, 0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("short by 3") != std::string::npos);
  }
  const SplitCounts d = default_split_counts(101);
  CHECK(d.valid == 10);
  CHECK(d.test == 10);
  CHECK(d.train == 81);
}

TEST_CASE("mimic: tables join into a cohort") {
  const auto dir = temp_dir("mimic");
  write_text(dir / "adm.csv",
             "SUBJECT_ID,HADM_ID,ADMITTIME\n"
             "1,10,2010-01-01 00:00:00\n"
             "1,11,\"2010-03-02 12:30:00\"\n"
             "2,20,2011-05-05\n"        // single admission: excluded
             "3,30,2012-01-01\n"
             "3,31,2012-02-01\n"
             "3,32,2012-03-01\n");     // 32 has no diagnoses: dropped
  write_text(dir / "dx.csv",
             "SUBJECT_ID,HADM_ID,ICD9_CODE\n"
             "1,10,4280\n1,10,\"5849\"\n1,11,4280\n2,20,1\n3,30,7\n3,31,8\n");
  write_text(dir / "rx.csv", "SUBJECT_ID,HADM_ID,DRUG\n1,10,\"Aspirin, 81mg\"\n3,31,Heparin\n");
  std::vector<std::string> warnings;
  const Cohort c = load_mimic_csv(dir / "adm.csv", dir / "dx.csv", dir / "rx.csv", &warnings);
  REQUIRE(c.patients.size() == 2);
  const Patient& p1 = c.patients[0];
  CHECK(p1.intervals == std::vector<std::int64_t>{0, 60});
  CHECK(p1.visits[0].codes.size() == 2);
  CHECK(c.drugs.id(p1.visits[0].drugs[0]) == "Aspirin, 81mg");
  CHECK(p1.visits[1].drugs.empty());
  CHECK(c.patients[1].visits.size() == 2);
  CHECK(warnings.size() == 2);

  const Cohort no_rx = load_mimic_csv(dir / "adm.csv", dir / "dx.csv", std::nullopt);
  CHECK(no_rx.drugs.size() == 0);

  write_text(dir / "bad.csv", "SUBJECT_ID,HADM_ID\n1,10\n");
  try {
    load_mimic_csv(dir / "bad.csv", dir / "dx.csv", std::nullopt);
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("ADMITTIME") != std::string::npos);
  }
}

TEST_CASE("reindex: unknown codes collapse to UNK, unknown drugs vanish") {
  const Cohort c = load_string(
      R"({"patient_id":"a","visits":[{"admit_day":0,"codes":["a","b","c"],"drugs":["d","e"]},{"admit_day":4,"codes":["a","z"]}]})"
      "\n");
  Vocab codes;
  codes.add("a");
  Vocab drugs;
  drugs.add("e");
  const Visit v = reindex(c.patients[0].visits[0], c, codes, drugs);
  CHECK(v.codes == std::vector<CodeId>{0, Vocab::kUnk});
  CHECK(v.drugs == std::vector<CodeId>{0});
  const auto ex = make_examples(c, Task::Diagnosis);
  const Example r = reindex(ex[0], c, codes, drugs);
  CHECK(r.target_codes == std::vector<CodeId>{0});
}

TEST_CASE("parse_patient_json: frozen vocabularies report unknown codes") {
  Vocab codes;
  codes.add("x");
  Vocab drugs;
  std::vector<std::string> unknown;
  const Patient p = parse_patient_json(
      R"({"patient_id":"q","visits":[{"admit_day":0,"codes":["x","u1","u2"],"drugs":["zz"]}]})", codes,
      drugs, false, &unknown);
  CHECK(p.visits[0].codes == std::vector<CodeId>{0, Vocab::kUnk});
  CHECK(p.visits[0].drugs.empty());
  CHECK(unknown == std::vector<std::string>{"u1", "u2"});
  CHECK(codes.size() == 1);
}

TEST_CASE("synthetic cohorts satisfy the patient invariants") {
  const SynthData s = generate(test::small_synth(200, 8));
  for (const Patient& p : s.cohort.patients) {
    REQUIRE(p.intervals.size() == p.visits.size());
    CHECK(p.intervals[0] == 0);
    for (std::size_t t = 1; t < p.visits.size(); ++t) {
      CHECK(p.intervals[t] == p.visits[t].admit_day - p.visits[t - 1].admit_day);
      CHECK(p.intervals[t] >= 0);
    }
    for (const Visit& v : p.visits) {
      CHECK_FALSE(v.codes.empty());
      std::set<CodeId> u(v.codes.begin(), v.codes.end());
      CHECK(u.size() == v.codes.size());
    }
  }
  for (const Example& ex : make_examples(s.cohort, Task::Diagnosis)) {
    CHECK(s.cohort.patients[ex.patient].visits.size() >= 2);
  }
}
