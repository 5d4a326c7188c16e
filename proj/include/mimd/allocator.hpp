#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mimd/isa.hpp"

namespace mimd {

/// One memory region: a 64-row slot of one mat, enough for one operand's
/// row-set at any supported bitwidth.
inline constexpr int kRegionRows = 64;

struct RegionRef {
    int subarray = 0;
    int mat = 0;
    int slot = 0;
    bool operator==(const RegionRef&) const = default;
};

struct AllocationRecord {
    uint64_t handle = 0;
    std::vector<RegionRef> regions;
    std::string label;
    int64_t size = 0;       // elements
    int slot = -1;          // common slot when the allocation is contiguous
    MatRange span{0, 0};    // mat span of the first (primary) segment
    int subarray = 0;
    bool contiguous = true;
    bool aligned = true;    // false when co-location fell back to worst-fit
};

/// Huge-page-backed region pool. The ordered per-subarray free counts drive
/// worst-fit selection; placement binds regions to (mat, slot) positions,
/// preferring a contiguous mat window with a common slot.
class RegionPool {
  public:
    RegionPool() = default;
    RegionPool(int subarrays, int mats_per_subarray, int slots_per_mat);

    /// Resets the pool to n_pages x regions_per_page regions, dealt
    /// round-robin across subarrays.
    void preallocate(int n_pages, int regions_per_page);

    int subarrays() const { return static_cast<int>(free_counts_.size()); }
    int free_count(int subarray) const { return free_counts_.at(subarray); }
    int total_free() const;
    int total_regions() const;

    /// Worst-fit scan: index of the subarray with the most free regions
    /// (lowest index wins ties); nullopt when the pool is empty.
    std::optional<int> worst_fit_pick() const;

    bool slot_free(int subarray, int mat, int slot) const;
    void take(const RegionRef& r);
    void release(const RegionRef& r);

    /// Lowest contiguous window of `mats` mats in `subarray` sharing a free
    /// slot; the per-mat capacity cap from preallocation applies.
    std::optional<std::pair<int, int>> find_window(int subarray, int mats) const;

    /// Free (mat, slot) positions of a subarray in deterministic order.
    std::vector<RegionRef> free_positions(int subarray, int limit) const;

    int mats_per_subarray() const { return mats_per_subarray_; }
    int slots_per_mat() const { return slots_per_mat_; }

  private:
    int capacity_of(int subarray) const;

    int mats_per_subarray_ = 0;
    int slots_per_mat_ = 0;
    std::vector<int> free_counts_;
    std::vector<int> capacity_;  // regions granted to each subarray
    // busy_[subarray][mat * slots_per_mat + slot]
    std::vector<std::vector<bool>> busy_;
};

/// Translation from (mat label, process id) to the mat range the allocator
/// assigned. Backed by open addressing over a fixed-size table.
class MatTranslationTable {
  public:
    explicit MatTranslationTable(int capacity = 256);

    void insert(const std::string& label, uint64_t pid, const MatRange& range);
    std::optional<MatRange> lookup(const std::string& label, uint64_t pid) const;

  private:
    struct Entry {
        bool used = false;
        std::string label;
        uint64_t pid = 0;
        MatRange range{0, 0};
    };
    size_t probe(const std::string& label, uint64_t pid) const;
    std::vector<Entry> table_;
};

/// pim_malloc model: pre-allocation of the huge-page pool, worst-fit first
/// allocation, and co-located aligned allocation for operands sharing a
/// mat label.
class PimAllocator {
  public:
    PimAllocator(int subarrays, int mats_per_subarray, int slots_per_mat,
                 int columns_per_mat);

    void preallocate(int n_pages, int regions_per_page);

    /// First allocation of a label: worst-fit subarray pick, contiguous mat
    /// window placement. Fails atomically when the pool cannot satisfy it.
    uint64_t pim_alloc(int64_t size_elements, const std::string& label, uint64_t pid = 0);

    /// Subsequent allocation of an existing label: lands in the matched
    /// allocation's subarray/mats when a slot is free there, otherwise
    /// falls back to worst-fit placement with aligned=false.
    uint64_t pim_alloc_align(int64_t size_elements, const std::string& label,
                             uint64_t pid = 0);

    void free(uint64_t handle);

    MatRange translate(const std::string& label, uint64_t pid = 0) const;
    const AllocationRecord& record(uint64_t handle) const;
    const RegionPool& pool() const { return pool_; }
    RegionPool& pool_mut() { return pool_; }  // test setup hook
    int64_t live_allocations() const { return static_cast<int64_t>(allocations_.size()); }

    void set_trace(std::ostream* os) { trace_ = os; }

  private:
    uint64_t commit(AllocationRecord rec);
    int mats_needed(int64_t size_elements) const;
    std::vector<RegionRef> place_worst_fit(int mats, AllocationRecord& rec);

    RegionPool pool_;
    int columns_per_mat_;
    std::unordered_map<uint64_t, AllocationRecord> allocations_;
    std::unordered_map<std::string, std::vector<uint64_t>> by_label_;  // label@pid
    MatTranslationTable translation_;
    uint64_t next_handle_ = 1;
    std::ostream* trace_ = nullptr;
};

}  // namespace mimd
