#include "swtte/design.hpp"

#include "swtte/csv.hpp"
#include "swtte/error.hpp"
#include "swtte/mmwr.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace swtte {
namespace {

const std::string kModule = "design";

}  // namespace

char glyph(CellStatus s) {
  switch (s) {
    case CellStatus::Control: return '.';
    case CellStatus::Exposed: return 'X';
    case CellStatus::Excluded: return '~';
    case CellStatus::Absent: return '-';
  }
  return '?';
}

std::string_view to_string(CellStatus s) {
  switch (s) {
    case CellStatus::Control: return "control";
    case CellStatus::Exposed: return "exposed";
    case CellStatus::Excluded: return "excluded";
    case CellStatus::Absent: return "absent";
  }
  return "?";
}

CellStatus parse_cell_status(std::string_view s) {
  if (s == "control") return CellStatus::Control;
  if (s == "exposed") return CellStatus::Exposed;
  if (s == "excluded") return CellStatus::Excluded;
  throw Error(kModule, "unknown status '" + std::string(s) + "'");
}

DesignSchematic DesignSchematic::from_grid(std::vector<int> periods, std::vector<std::string> ids,
                                           std::vector<CellStatus> grid) {
  if (periods.empty()) throw Error(kModule, "study range is empty");
  for (std::size_t j = 1; j < periods.size(); ++j)
    if (periods[j] != periods[j - 1] + 1)
      throw Error(kModule, "periods must be contiguous integers");
  if (grid.size() != ids.size() * periods.size())
    throw Error(kModule, "grid size does not match clusters x periods");

  std::set<std::string> seen;
  DesignSchematic s;
  s.rows_.reserve(ids.size());
  const std::size_t T = periods.size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i].empty()) throw Error(kModule, "empty cluster id");
    if (!seen.insert(ids[i]).second) throw Error(kModule, "duplicate cluster id '" + ids[i] + "'");

    ClusterSequence seq{ids[i], std::nullopt, 0};
    // 0: control phase, 1: excluded run, 2: exposed phase
    int phase = 0;
    for (std::size_t j = 0; j < T; ++j) {
      const CellStatus c = grid[i * T + j];
      if (c == CellStatus::Absent) continue;
      auto violation = [&](const char* what) {
        return Error(kModule, "cluster '" + ids[i] + "' period " + std::to_string(periods[j]) +
                                  ": " + what);
      };
      switch (c) {
        case CellStatus::Control:
          if (phase != 0) throw violation("control cell after adoption (exposure must be monotone)");
          break;
        case CellStatus::Excluded:
          if (phase == 2) throw violation("excluded cell after an exposed cell");
          if (phase == 0) seq.announcement = periods[j];
          phase = 1;
          ++seq.n_excluded;
          break;
        case CellStatus::Exposed:
          if (phase == 0) seq.announcement = periods[j];
          phase = 2;
          break;
        case CellStatus::Absent: break;
      }
    }
    // An excluded run must be contiguous from the announcement.
    if (seq.n_excluded > 0) {
      const auto a = static_cast<std::size_t>(*seq.announcement - periods.front());
      for (std::size_t j = a; j < a + static_cast<std::size_t>(seq.n_excluded); ++j)
        if (j >= T || grid[i * T + j] != CellStatus::Excluded)
          throw Error(kModule, "cluster '" + ids[i] + "': excluded cells must directly follow the announcement");
    }
    s.rows_.push_back(std::move(seq));
  }
  s.periods_ = std::move(periods);
  s.grid_ = std::move(grid);
  return s;
}

PeriodRange DesignSchematic::range() const {
  if (periods_.empty()) return {};
  return {periods_.front(), periods_.back()};
}

std::span<const CellStatus> DesignSchematic::row(std::size_t r) const {
  return std::span<const CellStatus>(grid_).subspan(r * periods_.size(), periods_.size());
}

std::optional<std::size_t> DesignSchematic::row_of(std::string_view id) const {
  for (std::size_t i = 0; i < rows_.size(); ++i)
    if (rows_[i].id == id) return i;
  return std::nullopt;
}

std::optional<std::size_t> DesignSchematic::col_of(int period) const {
  if (periods_.empty() || period < periods_.front() || period > periods_.back()) return std::nullopt;
  return static_cast<std::size_t>(period - periods_.front());
}

std::optional<int> DesignSchematic::first_exposed(std::size_t r) const {
  for (std::size_t j = 0; j < periods_.size(); ++j)
    if (exposed(r, j)) return periods_[j];
  return std::nullopt;
}

int DesignSchematic::exposure_time(std::size_t r, std::size_t col) const {
  if (!exposed(r, col)) return 0;
  int k = 0;
  for (std::size_t j = 0; j <= col; ++j) k += exposed(r, j) ? 1 : 0;
  return k;
}

StatusCounts DesignSchematic::counts() const {
  StatusCounts c;
  for (auto s : grid_) {
    switch (s) {
      case CellStatus::Control: ++c.control; break;
      case CellStatus::Exposed: ++c.exposed; break;
      case CellStatus::Excluded: ++c.excluded; break;
      case CellStatus::Absent: ++c.absent; break;
    }
  }
  return c;
}

bool DesignSchematic::positivity_holds() const {
  const auto c = counts();
  return c.exposed > 0 && c.control > 0;
}

void DesignSchematic::require_positivity() const {
  const auto c = counts();
  if (c.exposed == 0) throw Error(kModule, "positivity violated: no exposed cluster-period");
  if (c.control == 0) throw Error(kModule, "positivity violated: no control cluster-period");
}

std::vector<CellStatus> sequence_statuses(const std::vector<int>& periods,
                                          std::optional<int> announcement, int n_excluded) {
  std::vector<CellStatus> out(periods.size(), CellStatus::Control);
  if (!announcement) return out;
  for (std::size_t j = 0; j < periods.size(); ++j) {
    const int p = periods[j];
    if (p < *announcement) continue;
    out[j] = p < *announcement + n_excluded ? CellStatus::Excluded : CellStatus::Exposed;
  }
  return out;
}

DesignSchematic build_schematic(std::span<const ClusterSequence> sequences, PeriodRange study_range) {
  if (study_range.size() <= 0) throw Error(kModule, "study range is empty");
  std::vector<int> periods;
  for (int p = study_range.first; p <= study_range.last; ++p) periods.push_back(p);

  std::vector<std::string> ids;
  std::vector<CellStatus> grid;
  grid.reserve(sequences.size() * periods.size());
  for (const auto& seq : sequences) {
    if (seq.n_excluded < 0) throw Error(kModule, "n_excluded must be nonnegative");
    if (seq.announcement && !study_range.contains(*seq.announcement))
      throw Error(kModule, "announcement period " + std::to_string(*seq.announcement) + " of '" +
                               seq.id + "' outside study range " + std::to_string(study_range.first) +
                               "-" + std::to_string(study_range.last));
    ids.push_back(seq.id);
    auto row = sequence_statuses(periods, seq.announcement, seq.n_excluded);
    grid.insert(grid.end(), row.begin(), row.end());
  }
  auto s = DesignSchematic::from_grid(std::move(periods), std::move(ids), std::move(grid));
  s.require_positivity();
  return s;
}

DesignSchematic build_schematic(std::span<const ClusterSequence> sequences, PeriodRange study_range,
                                int n_excluded) {
  std::vector<ClusterSequence> seqs(sequences.begin(), sequences.end());
  for (auto& s : seqs) s.n_excluded = n_excluded;
  return build_schematic(seqs, study_range);
}

DesignSchematic restrict_clusters(const DesignSchematic& schematic, std::span<const std::string> keep) {
  if (keep.empty()) throw Error(kModule, "restriction set is empty");
  std::set<std::string> wanted;
  for (const auto& id : keep) {
    if (!schematic.row_of(id)) throw Error(kModule, "unknown cluster id '" + id + "'");
    wanted.insert(id);
  }
  std::vector<std::string> ids;
  std::vector<CellStatus> grid;
  for (std::size_t i = 0; i < schematic.n_clusters(); ++i) {
    if (!wanted.contains(schematic.rows()[i].id)) continue;
    ids.push_back(schematic.rows()[i].id);
    auto r = schematic.row(i);
    grid.insert(grid.end(), r.begin(), r.end());
  }
  auto s = DesignSchematic::from_grid(schematic.periods(), std::move(ids), std::move(grid));
  s.require_positivity();
  return s;
}

TimingGroups timing_groups(const DesignSchematic& schematic) {
  TimingGroups tg;
  for (std::size_t i = 0; i < schematic.n_clusters(); ++i) {
    const auto& id = schematic.rows()[i].id;
    if (auto g = schematic.first_exposed(i))
      tg.groups[*g].push_back(id);
    else
      tg.never_exposed.push_back(id);
  }
  return tg;
}

std::string render_schematic(const DesignSchematic& schematic) {
  std::size_t width = 0;
  for (const auto& r : schematic.rows()) width = std::max(width, r.id.size());
  std::ostringstream out;
  out << "weeks";
  for (int p : schematic.periods()) out << ' ' << p;
  out << '\n';
  for (std::size_t i = 0; i < schematic.n_clusters(); ++i) {
    const auto& id = schematic.rows()[i].id;
    out << id << std::string(width - id.size() + 1, ' ');
    for (auto c : schematic.row(i)) out << glyph(c);
    out << '\n';
  }
  return out.str();
}

DesignSchematic parse_rendered_schematic(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error(kModule, "rendered schematic is empty");
  std::istringstream head(line);
  std::string word;
  head >> word;
  if (word != "weeks") throw Error(kModule, "rendered schematic must start with 'weeks'");
  std::vector<int> periods;
  for (int p; head >> p;) periods.push_back(p);

  std::vector<std::string> ids;
  std::vector<CellStatus> grid;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string id, cells;
    if (!(row >> id)) continue;
    row >> cells;
    if (cells.size() != periods.size())
      throw Error(kModule, "row '" + id + "' has " + std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(periods.size()));
    ids.push_back(id);
    for (char c : cells) {
      switch (c) {
        case '.': grid.push_back(CellStatus::Control); break;
        case 'X': grid.push_back(CellStatus::Exposed); break;
        case '~': grid.push_back(CellStatus::Excluded); break;
        case '-': grid.push_back(CellStatus::Absent); break;
        default: throw Error(kModule, std::string("unknown glyph '") + c + "' in row '" + id + "'");
      }
    }
  }
  return DesignSchematic::from_grid(std::move(periods), std::move(ids), std::move(grid));
}

void write_design_csv(std::ostream& out, const DesignSchematic& schematic) {
  out << "cluster,period,status\n";
  for (std::size_t i = 0; i < schematic.n_clusters(); ++i) {
    for (std::size_t j = 0; j < schematic.n_periods(); ++j) {
      const auto c = schematic.at(i, j);
      if (c == CellStatus::Absent) continue;
      out << csv::escape(schematic.rows()[i].id) << ',' << schematic.periods()[j] << ','
          << to_string(c) << '\n';
    }
  }
}

DesignSchematic read_design_csv(std::istream& in) {
  const auto t = csv::read(in, kModule);
  const auto ci = t.require_column("cluster", kModule);
  const auto pi = t.require_column("period", kModule);
  const auto si = t.require_column("status", kModule);

  std::vector<std::string> ids;
  std::map<std::pair<std::string, int>, CellStatus> cells;
  int lo = 0, hi = -1;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto rn = t.row_numbers[r];
    const int p = csv::parse_int(row[pi], rn, "period", kModule);
    CellStatus st;
    try {
      st = parse_cell_status(row[si]);
    } catch (const Error&) {
      throw Error(kModule, "row " + std::to_string(rn) + ", column 'status': unknown status '" + row[si] + "'");
    }
    if (std::find(ids.begin(), ids.end(), row[ci]) == ids.end()) ids.push_back(row[ci]);
    if (!cells.emplace(std::make_pair(row[ci], p), st).second)
      throw Error(kModule, "row " + std::to_string(rn) + ": duplicate (cluster, period) (" + row[ci] + ", " +
                               std::to_string(p) + ")");
    if (hi < lo) {
      lo = hi = p;
    } else {
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
  }
  if (ids.empty()) throw Error(kModule, "design file has no rows");
  std::vector<int> periods;
  for (int p = lo; p <= hi; ++p) periods.push_back(p);
  std::vector<CellStatus> grid;
  grid.reserve(ids.size() * periods.size());
  for (const auto& id : ids)
    for (int p : periods) {
      auto it = cells.find({id, p});
      grid.push_back(it == cells.end() ? CellStatus::Absent : it->second);
    }
  auto s = DesignSchematic::from_grid(std::move(periods), std::move(ids), std::move(grid));
  s.require_positivity();
  return s;
}

std::vector<ClusterSequence> read_announcements_csv(std::istream& in) {
  const auto t = csv::read(in, kModule);
  const auto ci = t.require_column("cluster", kModule);
  const auto wi = t.column("announce_week");
  const auto di = t.column("announce_date");
  if (!wi && !di) throw Error(kModule, "missing column 'announce_week'");
  std::vector<ClusterSequence> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto rn = t.row_numbers[r];
    if (!seen.insert(row[ci]).second)
      throw Error(kModule, "row " + std::to_string(rn) + ": duplicate cluster id '" + row[ci] + "'");
    ClusterSequence seq{row[ci], std::nullopt, 0};
    if (wi && !row[*wi].empty()) {
      seq.announcement = csv::parse_int(row[*wi], rn, "announce_week", kModule);
    } else if (di && !row[*di].empty()) {
      auto w = mmwr::week_2021(row[*di]);
      if (!w)
        throw Error(kModule, "row " + std::to_string(rn) + ", column 'announce_date': '" + row[*di] +
                                 "' is not a 2021 date");
      seq.announcement = *w;
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace swtte
