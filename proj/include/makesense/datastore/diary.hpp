#pragma once

#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "makesense/datastore/csv.hpp"

namespace makesense::datastore {

inline constexpr Duration kDiarySlot = minutes(10);

struct DiaryEntry {
  std::string site;
  TimePoint slot_start;
  int activity_code = 0;
  std::string location;
  std::string who;

  bool operator==(const DiaryEntry&) const = default;
};

/// Maps a participant name from the diary to its pseudonym.
using Pseudonymizer = std::function<std::string(const std::string&)>;

/// Parses "slot_start,activity_code,location,who" rows (header optional).
/// Slots must start on a 10-minute boundary. Throws BadCsv with the line number.
std::vector<DiaryEntry> parse_diary_csv(std::string_view text, const std::string& site, const Pseudonymizer& who);

/// Time-use diary entries per site, optionally persisted to a CSV file.
class DiaryStore {
 public:
  explicit DiaryStore(std::optional<std::filesystem::path> file = std::nullopt);

  /// All-or-nothing: a bad row leaves the store unchanged.
  std::size_t import_csv(std::string_view text, const std::string& site, const Pseudonymizer& who);
  /// Entries whose slot overlaps [t0, t1), ordered by slot start.
  std::vector<DiaryEntry> overlay(const std::string& site, TimePoint t0, TimePoint t1) const;
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> file_;
  mutable std::mutex mu_;
  std::vector<DiaryEntry> entries_;
};

}  // namespace makesense::datastore
