#include "mimd/allocator.hpp"

#include <algorithm>

#include "mimd/error.hpp"

namespace mimd {

RegionPool::RegionPool(int subarrays, int mats_per_subarray, int slots_per_mat)
    : mats_per_subarray_(mats_per_subarray),
      slots_per_mat_(slots_per_mat),
      free_counts_(subarrays, 0),
      capacity_(subarrays, 0),
      busy_(subarrays) {
    for (auto& b : busy_) b.assign(mats_per_subarray * slots_per_mat, true);
}

void RegionPool::preallocate(int n_pages, int regions_per_page) {
    if (n_pages < 0) throw AllocError("negative page count");
    const int total = n_pages * regions_per_page;
    const int subarrays = static_cast<int>(free_counts_.size());
    for (int s = 0; s < subarrays; ++s) {
        capacity_[s] = total / subarrays + (s < total % subarrays ? 1 : 0);
        capacity_[s] = std::min(capacity_[s], mats_per_subarray_ * slots_per_mat_);
        free_counts_[s] = capacity_[s];
        busy_[s].assign(mats_per_subarray_ * slots_per_mat_, true);
        // Grant regions slot-major so low slots fill first across the mats.
        int granted = 0;
        for (int slot = 0; slot < slots_per_mat_ && granted < capacity_[s]; ++slot)
            for (int mat = 0; mat < mats_per_subarray_ && granted < capacity_[s]; ++mat) {
                busy_[s][mat * slots_per_mat_ + slot] = false;
                ++granted;
            }
    }
}

int RegionPool::total_free() const {
    int sum = 0;
    for (int c : free_counts_) sum += c;
    return sum;
}

int RegionPool::total_regions() const {
    int sum = 0;
    for (int c : capacity_) sum += c;
    return sum;
}

std::optional<int> RegionPool::worst_fit_pick() const {
    int best = -1;
    for (int s = 0; s < subarrays(); ++s)
        if (free_counts_[s] > 0 && (best < 0 || free_counts_[s] > free_counts_[best]))
            best = s;
    if (best < 0) return std::nullopt;
    return best;
}

bool RegionPool::slot_free(int subarray, int mat, int slot) const {
    return !busy_.at(subarray).at(mat * slots_per_mat_ + slot);
}

void RegionPool::take(const RegionRef& r) {
    auto idx = r.mat * slots_per_mat_ + r.slot;
    if (busy_.at(r.subarray).at(idx)) throw AllocError("region already taken");
    busy_[r.subarray][idx] = true;
    --free_counts_[r.subarray];
}

void RegionPool::release(const RegionRef& r) {
    auto idx = r.mat * slots_per_mat_ + r.slot;
    if (!busy_.at(r.subarray).at(idx)) throw AllocError("releasing a free region");
    busy_[r.subarray][idx] = false;
    ++free_counts_[r.subarray];
}

std::optional<std::pair<int, int>> RegionPool::find_window(int subarray, int mats) const {
    if (mats > mats_per_subarray_) return std::nullopt;
    for (int slot = 0; slot < slots_per_mat_; ++slot) {
        int run = 0;
        for (int mat = 0; mat < mats_per_subarray_; ++mat) {
            run = slot_free(subarray, mat, slot) ? run + 1 : 0;
            if (run == mats) return std::pair{mat - mats + 1, slot};
        }
    }
    return std::nullopt;
}

std::vector<RegionRef> RegionPool::free_positions(int subarray, int limit) const {
    std::vector<RegionRef> out;
    for (int slot = 0; slot < slots_per_mat_ && static_cast<int>(out.size()) < limit; ++slot)
        for (int mat = 0; mat < mats_per_subarray_ && static_cast<int>(out.size()) < limit;
             ++mat)
            if (slot_free(subarray, mat, slot)) out.push_back({subarray, mat, slot});
    return out;
}

int RegionPool::capacity_of(int subarray) const { return capacity_.at(subarray); }

MatTranslationTable::MatTranslationTable(int capacity) : table_(capacity) {}

size_t MatTranslationTable::probe(const std::string& label, uint64_t pid) const {
    return (std::hash<std::string>{}(label) ^ (pid * 0x9e3779b97f4a7c15ull)) % table_.size();
}

void MatTranslationTable::insert(const std::string& label, uint64_t pid,
                                 const MatRange& range) {
    size_t i = probe(label, pid);
    for (size_t n = 0; n < table_.size(); ++n) {
        Entry& e = table_[(i + n) % table_.size()];
        if (!e.used || (e.label == label && e.pid == pid)) {
            e = Entry{true, label, pid, range};
            return;
        }
    }
    throw AllocError("mat translation table full");
}

std::optional<MatRange> MatTranslationTable::lookup(const std::string& label,
                                                    uint64_t pid) const {
    size_t i = probe(label, pid);
    for (size_t n = 0; n < table_.size(); ++n) {
        const Entry& e = table_[(i + n) % table_.size()];
        if (!e.used) return std::nullopt;
        if (e.label == label && e.pid == pid) return e.range;
    }
    return std::nullopt;
}

PimAllocator::PimAllocator(int subarrays, int mats_per_subarray, int slots_per_mat,
                           int columns_per_mat)
    : pool_(subarrays, mats_per_subarray, slots_per_mat), columns_per_mat_(columns_per_mat) {}

void PimAllocator::preallocate(int n_pages, int regions_per_page) {
    pool_.preallocate(n_pages, regions_per_page);
    allocations_.clear();
    by_label_.clear();
    translation_ = MatTranslationTable();
    next_handle_ = 1;
    if (trace_) *trace_ << "preallocate pages=" << n_pages
                        << " regions=" << pool_.total_free() << "\n";
}

int PimAllocator::mats_needed(int64_t size_elements) const {
    return static_cast<int>((size_elements + columns_per_mat_ - 1) / columns_per_mat_);
}

std::vector<RegionRef> PimAllocator::place_worst_fit(int mats, AllocationRecord& rec) {
    // Worst-fit subarray order: repeatedly pick the subarray with the most
    // free regions until the request is satisfied.
    std::vector<RegionRef> taken;
    int remaining = mats;
    bool first_batch = true;
    while (remaining > 0) {
        auto pick = pool_.worst_fit_pick();
        if (!pick) {
            for (const auto& r : taken) pool_.release(r);  // fail atomically
            throw AllocError("out of memory regions");
        }
        const int s = *pick;
        int batch = std::min(remaining, pool_.free_count(s));
        if (first_batch) {
            rec.subarray = s;
            // Contiguous window with a common slot keeps the operand in one
            // mat span; fall back to scattered regions when fragmented.
            if (auto window = pool_.find_window(s, batch)) {
                auto [mat0, slot] = *window;
                for (int i = 0; i < batch; ++i) {
                    RegionRef r{s, mat0 + i, slot};
                    pool_.take(r);
                    taken.push_back(r);
                }
                rec.slot = slot;
                rec.span = MatRange{mat0, mat0 + batch - 1};
                rec.contiguous = true;
                remaining -= batch;
                first_batch = false;
                continue;
            }
        }
        auto positions = pool_.free_positions(s, batch);
        for (const auto& r : positions) {
            pool_.take(r);
            taken.push_back(r);
        }
        if (first_batch) {
            rec.subarray = s;
            rec.slot = positions.front().slot;
            int lo = positions.front().mat, hi = positions.front().mat;
            for (const auto& r : positions) {
                lo = std::min(lo, r.mat);
                hi = std::max(hi, r.mat);
            }
            rec.span = MatRange{lo, hi};
            rec.contiguous = false;
            first_batch = false;
        } else {
            rec.contiguous = false;
        }
        remaining -= static_cast<int>(positions.size());
    }
    return taken;
}

uint64_t PimAllocator::commit(AllocationRecord rec) {
    rec.handle = next_handle_++;
    by_label_[rec.label].push_back(rec.handle);
    if (trace_) {
        *trace_ << "alloc handle=" << rec.handle << " label=" << rec.label
                << " subarray=" << rec.subarray << " mats=" << to_string(rec.span)
                << " slot=" << rec.slot << (rec.aligned ? "" : " unaligned") << "\n";
        *trace_ << "pool";
        for (int s = 0; s < pool_.subarrays(); ++s) *trace_ << " " << pool_.free_count(s);
        *trace_ << "\n";
    }
    uint64_t h = rec.handle;
    allocations_.emplace(h, std::move(rec));
    return h;
}

uint64_t PimAllocator::pim_alloc(int64_t size_elements, const std::string& label,
                                 uint64_t pid) {
    if (pool_.total_regions() == 0) throw AllocError("allocator pool not preallocated");
    AllocationRecord rec;
    rec.label = label;
    rec.size = size_elements;
    rec.regions = place_worst_fit(mats_needed(size_elements), rec);
    rec.aligned = true;
    uint64_t h = commit(std::move(rec));
    translation_.insert(label, pid, allocations_.at(h).span);
    return h;
}

uint64_t PimAllocator::pim_alloc_align(int64_t size_elements, const std::string& label,
                                       uint64_t pid) {
    auto it = by_label_.find(label);
    if (it == by_label_.end() || it->second.empty())
        throw AllocError("pim_alloc_align: no prior allocation with label " + label);

    const int mats = mats_needed(size_elements);
    // Walk the label's previous allocations for a co-location target.
    for (uint64_t prior_handle : it->second) {
        const AllocationRecord& prior = allocations_.at(prior_handle);
        if (!prior.contiguous || prior.span.count() < mats) continue;
        for (int slot = 0; slot < pool_.slots_per_mat(); ++slot) {
            bool ok = true;
            for (int m = prior.span.begin; m < prior.span.begin + mats; ++m)
                if (!pool_.slot_free(prior.subarray, m, slot)) { ok = false; break; }
            if (!ok) continue;
            AllocationRecord rec;
            rec.label = label;
            rec.size = size_elements;
            rec.subarray = prior.subarray;
            rec.slot = slot;
            rec.span = MatRange{prior.span.begin, prior.span.begin + mats - 1};
            rec.contiguous = true;
            rec.aligned = true;
            for (int m = rec.span.begin; m <= rec.span.end; ++m) {
                RegionRef r{prior.subarray, m, slot};
                pool_.take(r);
                rec.regions.push_back(r);
            }
            uint64_t h = commit(std::move(rec));
            translation_.insert(label, pid, allocations_.at(h).span);
            return h;
        }
    }

    // Matched mats have no capacity: place elsewhere by worst fit.
    AllocationRecord rec;
    rec.label = label;
    rec.size = size_elements;
    rec.regions = place_worst_fit(mats, rec);
    rec.aligned = false;
    uint64_t h = commit(std::move(rec));
    translation_.insert(label, pid, allocations_.at(h).span);
    return h;
}

void PimAllocator::free(uint64_t handle) {
    auto it = allocations_.find(handle);
    if (it == allocations_.end()) throw AllocError("free of unknown handle");
    for (const auto& r : it->second.regions) pool_.release(r);
    auto& handles = by_label_[it->second.label];
    handles.erase(std::remove(handles.begin(), handles.end(), handle), handles.end());
    allocations_.erase(it);
}

MatRange PimAllocator::translate(const std::string& label, uint64_t pid) const {
    auto r = translation_.lookup(label, pid);
    if (!r) throw AllocError("unresolved mat label: " + label);
    return *r;
}

const AllocationRecord& PimAllocator::record(uint64_t handle) const {
    auto it = allocations_.find(handle);
    if (it == allocations_.end()) throw AllocError("unknown allocation handle");
    return it->second;
}

}  // namespace mimd
