#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace swtte {

enum class CellStatus : std::uint8_t { Control, Exposed, Excluded, Absent };

char glyph(CellStatus s);
std::string_view to_string(CellStatus s);
CellStatus parse_cell_status(std::string_view s);

/// Inclusive, contiguous range of period indices (MMWR weeks).
struct PeriodRange {
  int first = 0;
  int last = -1;

  int size() const { return last - first + 1; }
  bool contains(int p) const { return p >= first && p <= last; }
};

struct ClusterSequence {
  std::string id;
  std::optional<int> announcement;  // absent: never exposed
  int n_excluded = 0;

  bool operator==(const ClusterSequence&) const = default;
};

struct StatusCounts {
  std::size_t control = 0;
  std::size_t exposed = 0;
  std::size_t excluded = 0;
  std::size_t absent = 0;
};

/// Cluster x period grid of exposure statuses.
///
/// Structural invariants (enforced at construction): periods are contiguous
/// integers; cluster ids are unique; within a row, once a cluster leaves
/// Control it never returns, Excluded cells form one run directly at the
/// announcement, and nothing but Exposed (or Absent) follows an Exposed cell.
/// Positivity is a property of a usable design rather than of the grid and is
/// checked by the constructors that produce designs (build/restrict/read).
class DesignSchematic {
 public:
  DesignSchematic() = default;

  static DesignSchematic from_grid(std::vector<int> periods, std::vector<std::string> ids,
                                   std::vector<CellStatus> grid);

  const std::vector<int>& periods() const { return periods_; }
  const std::vector<ClusterSequence>& rows() const { return rows_; }
  std::size_t n_clusters() const { return rows_.size(); }
  std::size_t n_periods() const { return periods_.size(); }
  PeriodRange range() const;

  CellStatus at(std::size_t row, std::size_t col) const { return grid_[row * periods_.size() + col]; }
  std::span<const CellStatus> row(std::size_t r) const;
  const std::vector<CellStatus>& grid() const { return grid_; }

  std::optional<std::size_t> row_of(std::string_view id) const;
  std::optional<std::size_t> col_of(int period) const;

  /// Binary exposure indicator X_ij.
  bool exposed(std::size_t row, std::size_t col) const { return at(row, col) == CellStatus::Exposed; }
  std::optional<int> first_exposed(std::size_t row) const;
  /// Number of Exposed cells in the row up to and including `col`; 0 when
  /// the cell itself is not Exposed.
  int exposure_time(std::size_t row, std::size_t col) const;

  StatusCounts counts() const;
  bool positivity_holds() const;
  /// Throws Error("design", ...) when positivity fails.
  void require_positivity() const;

  bool operator==(const DesignSchematic& o) const {
    return periods_ == o.periods_ && rows_ == o.rows_ && grid_ == o.grid_;
  }

 private:
  std::vector<int> periods_;
  std::vector<ClusterSequence> rows_;
  std::vector<CellStatus> grid_;
};

/// Status row for one cluster: Control before the announcement, Excluded
/// for n_excluded periods starting at it, Exposed afterwards.
std::vector<CellStatus> sequence_statuses(const std::vector<int>& periods,
                                          std::optional<int> announcement, int n_excluded);

DesignSchematic build_schematic(std::span<const ClusterSequence> sequences, PeriodRange study_range,
                                int n_excluded);
/// Uses each sequence's own n_excluded.
DesignSchematic build_schematic(std::span<const ClusterSequence> sequences, PeriodRange study_range);

DesignSchematic restrict_clusters(const DesignSchematic& schematic, std::span<const std::string> keep);

struct TimingGroups {
  std::map<int, std::vector<std::string>> groups;  // first exposed period -> clusters
  std::vector<std::string> never_exposed;
};

TimingGroups timing_groups(const DesignSchematic& schematic);

/// Fixed-glyph text grid: '.' Control, 'X' Exposed, '~' Excluded, '-' Absent.
std::string render_schematic(const DesignSchematic& schematic);
DesignSchematic parse_rendered_schematic(std::string_view text);

/// `cluster,period,status` rows; Absent cells are omitted.
void write_design_csv(std::ostream& out, const DesignSchematic& schematic);
DesignSchematic read_design_csv(std::istream& in);

/// `cluster,announce_week` rows; an empty week means never exposed. An
/// `announce_date` column (YYYY-MM-DD, 2021) is accepted in place of the week.
std::vector<ClusterSequence> read_announcements_csv(std::istream& in);

}  // namespace swtte
