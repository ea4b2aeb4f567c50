#include "makesense/datastore/diary.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace makesense::datastore {
namespace {

DiaryEntry parse_row(const std::vector<std::string>& f, std::size_t line_no) {
  DiaryEntry e;
  try {
    e.slot_start = parse_timestamp(f[0]);
  } catch (const Error&) {
    throw BadCsv(line_no, "bad slot_start '" + f[0] + "'");
  }
  if (e.slot_start.time_since_epoch() % kDiarySlot != Duration::zero())
    throw BadCsv(line_no, "slot_start " + f[0] + " is not on a 10-minute boundary");
  auto [p, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), e.activity_code);
  if (ec != std::errc() || p != f[1].data() + f[1].size()) throw BadCsv(line_no, "bad activity_code '" + f[1] + "'");
  e.location = f[2];
  e.who = f[3];
  return e;
}

}  // namespace

std::vector<DiaryEntry> parse_diary_csv(std::string_view text, const std::string& site, const Pseudonymizer& who) {
  std::vector<DiaryEntry> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> f;
    try {
      f = split_csv_line(line);
    } catch (const Error& e) {
      throw BadCsv(line_no, e.what());
    }
    if (line_no == 1 && !f.empty() && f[0] == "slot_start") continue;
    if (f.size() != 4) throw BadCsv(line_no, "expected 4 columns");
    DiaryEntry e = parse_row(f, line_no);
    e.site = site;
    if (who && !e.who.empty()) e.who = who(e.who);
    out.push_back(std::move(e));
  }
  return out;
}

DiaryStore::DiaryStore(std::optional<std::filesystem::path> file) : file_(std::move(file)) {
  if (!file_ || !std::filesystem::exists(*file_)) return;
  std::ifstream in(*file_);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw BadCsv(line_no, "expected 5 columns in " + file_->string());
    DiaryEntry e = parse_row({f[1], f[2], f[3], f[4]}, line_no);
    e.site = f[0];
    entries_.push_back(std::move(e));
  }
}

std::size_t DiaryStore::import_csv(std::string_view text, const std::string& site, const Pseudonymizer& who) {
  auto parsed = parse_diary_csv(text, site, who);
  std::lock_guard lock(mu_);
  if (file_) {
    std::ofstream out(*file_, std::ios::app);
    if (!out) throw IoError("cannot write " + file_->string());
    for (const auto& e : parsed)
      out << csv_field(e.site) << ',' << format_unix_seconds(e.slot_start) << ',' << e.activity_code << ','
          << csv_field(e.location) << ',' << csv_field(e.who) << '\n';
  }
  entries_.insert(entries_.end(), parsed.begin(), parsed.end());
  return parsed.size();
}

std::vector<DiaryEntry> DiaryStore::overlay(const std::string& site, TimePoint t0, TimePoint t1) const {
  std::lock_guard lock(mu_);
  std::vector<DiaryEntry> out;
  for (const auto& e : entries_)
    if (e.site == site && e.slot_start < t1 && e.slot_start + kDiarySlot > t0) out.push_back(e);
  std::stable_sort(out.begin(), out.end(), [](const DiaryEntry& a, const DiaryEntry& b) { return a.slot_start < b.slot_start; });
  return out;
}

std::size_t DiaryStore::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

}  // namespace makesense::datastore
