#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tham {

using CodeId = std::int32_t;

/// Insertion-ordered identifier <-> index map.
class Vocab {
 public:
  static constexpr CodeId kUnk = -1;

  CodeId add(std::string_view id);
  /// kUnk when absent.
  CodeId find(std::string_view id) const;
  const std::string& id(CodeId index) const { return ids_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  bool operator==(const Vocab& other) const { return ids_ == other.ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, CodeId> index_;
};

struct Visit {
  std::int64_t admit_day = 0;
  std::vector<CodeId> codes;  // nonempty, duplicate-free; may hold Vocab::kUnk
  std::vector<CodeId> drugs;  // duplicate-free, may be empty
};

struct Patient {
  std::string id;
  std::vector<Visit> visits;           // ascending admit_day
  std::vector<std::int64_t> intervals;  // intervals[0] = 0, then day deltas
};

struct Cohort {
  std::vector<Patient> patients;
  Vocab codes;
  Vocab drugs;

  /// Patients selected by index, sharing this cohort's vocabularies.
  Cohort subset(std::span<const std::size_t> patient_indices) const;
};

enum class Task { Diagnosis, HeartFailure };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);

struct Example {
  Task task = Task::Diagnosis;
  std::size_t patient = 0;               // index into the source cohort
  std::vector<Visit> history;            // visits 1..T
  std::vector<std::int64_t> intervals;   // matching history
  std::vector<CodeId> target_codes;      // codes of visit T+1
  int heart_failure = 0;                 // 1 iff a visit T+1 code starts with "428"
};

/// Days since 1970-01-01 for a "YYYY-MM-DD" prefix (time of day is ignored).
std::int64_t parse_day(std::string_view date);

/// Sorts visits, merges same-day visits and recomputes intervals.
/// Returns the number of merges performed.
std::size_t normalize_visits(Patient& patient);

/// Parses one patient object of the JSONL schema. Identifiers are added to the
/// vocabularies when `grow` is set; otherwise unknown codes become Vocab::kUnk
/// (reported through `unknown`) and unknown drugs are dropped.
Patient parse_patient_json(std::string_view line, Vocab& codes, Vocab& drugs, bool grow,
                           std::vector<std::string>* unknown = nullptr);

Cohort load_jsonl(const std::filesystem::path& path,
                  std::vector<std::string>* warnings = nullptr);
void write_jsonl(const Cohort& cohort, const std::filesystem::path& path);
std::string to_jsonl(const Cohort& cohort);

/// Joins MIMIC-style admissions, diagnoses and (optional) prescriptions tables.
Cohort load_mimic_csv(const std::filesystem::path& admissions,
                      const std::filesystem::path& diagnoses,
                      const std::optional<std::filesystem::path>& prescriptions,
                      std::vector<std::string>* warnings = nullptr);

bool is_heart_failure_code(std::string_view code);

std::vector<Example> make_examples(const Cohort& cohort, Task task);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
};

struct Split {
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;
};

/// Seeded shuffle, then the first `counts.train` examples train, and so on.
Split split(std::vector<Example> examples, SplitCounts counts, std::uint64_t seed);

/// 80/10/10 counts for `n` examples (train takes the rounding remainder).
SplitCounts default_split_counts(std::size_t n);

/// Code and drug vocabularies of the cohort's patients in first-appearance order.
struct VocabPair {
  Vocab codes;
  Vocab drugs;
};
VocabPair collect_vocab(const Cohort& cohort);

/// Re-expresses identifiers against other vocabularies. Codes missing from
/// `codes` collapse into a single Vocab::kUnk entry; missing drugs are dropped.
Visit reindex(const Visit& visit, const Cohort& source, const Vocab& codes, const Vocab& drugs);
Cohort reindex(const Cohort& cohort, const Vocab& codes, const Vocab& drugs);
/// Targets outside `codes` are dropped; the heart-failure flag is kept.
Example reindex(const Example& example, const Cohort& source, const Vocab& codes,
                const Vocab& drugs);

// RFC 4180 reader used by the MIMIC loader.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace tham
