#pragma once

#include <bit>
#include <cstring>

#include "arranger/adam.hpp"
#include "arranger/io.hpp"
#include "arranger/nn.hpp"

namespace arranger {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

// Checkpoint container, binary little-endian:
//   magic "ARNGCKPT", u32 version
//   str model_id, str variant, u64 iteration
//   u32 n_sections, per section:
//     str section name
//     u32 n_entries, per entry: str name, u8 trainable, u32 rank, i64 dims[],
//                               f32 data[] (raw little-endian)
//     u32 n_slots, per slot: str name, i64 step, f32 m[], f32 v[]
//       (moment shapes equal the parameter with the same name)
//   str rng_state, str history_json
// Strings are u32 length + bytes.

namespace detail {

inline constexpr char kCkptMagic[8] = {'A', 'R', 'N', 'G', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCkptVersion = 1;

class ByteWriter {
public:
    template <class V>
    void put(V v) {
        static_assert(std::is_trivially_copyable_v<V>);
        const size_t off = bytes_.size();
        bytes_.resize(off + sizeof(V));
        std::memcpy(bytes_.data() + off, &v, sizeof(V));
    }
    void put_str(const std::string& s) {
        put<uint32_t>(static_cast<uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    template <class T>
    void put_f32s(const Tensor<T>& t) {
        const size_t off = bytes_.size();
        bytes_.resize(off + static_cast<size_t>(t.numel()) * 4);
        float* out = reinterpret_cast<float*>(bytes_.data() + off);
        for (int64_t i = 0; i < t.numel(); ++i) out[i] = static_cast<float>(t[i]);
    }
    std::vector<uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<uint8_t>& b) : bytes_(b) {}
    template <class V>
    V get() {
        static_assert(std::is_trivially_copyable_v<V>);
        need(sizeof(V));
        V v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
        pos_ += sizeof(V);
        return v;
    }
    std::string get_str() {
        uint32_t n = get<uint32_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    template <class T>
    Tensor<T> get_f32s(Shape shape) {
        const int64_t n = numel(shape);
        need(static_cast<size_t>(n) * 4);
        std::vector<T> data(static_cast<size_t>(n));
        const float* in = reinterpret_cast<const float*>(bytes_.data() + pos_);
        for (int64_t i = 0; i < n; ++i) data[static_cast<size_t>(i)] = static_cast<T>(in[i]);
        pos_ += static_cast<size_t>(n) * 4;
        return Tensor<T>(std::move(shape), std::move(data));
    }

private:
    void need(size_t n) const {
        if (pos_ + n > bytes_.size()) throw DataError("checkpoint: truncated file");
    }
    const std::vector<uint8_t>& bytes_;
    size_t pos_ = 0;
};

}  // namespace detail

template <class T>
struct CheckpointSection {
    std::string name;
    nn::ParamStore<T>* store = nullptr;
    Adam<T>* optimizer = nullptr;  // may be null (no optimizer state)
};

template <class T>
struct CheckpointMeta {
    std::string model_id;
    std::string variant;
    uint64_t iteration = 0;
    std::string rng_state;
    std::string history_json;
};

template <class T>
void save_checkpoint(const std::string& path, const CheckpointMeta<T>& meta,
                     const std::vector<CheckpointSection<T>>& sections) {
    detail::ByteWriter w;
    for (char c : detail::kCkptMagic) w.put<char>(c);
    w.put<uint32_t>(detail::kCkptVersion);
    w.put_str(meta.model_id);
    w.put_str(meta.variant);
    w.put<uint64_t>(meta.iteration);
    w.put<uint32_t>(static_cast<uint32_t>(sections.size()));
    for (const auto& sec : sections) {
        w.put_str(sec.name);
        w.put<uint32_t>(static_cast<uint32_t>(sec.store->entries().size()));
        for (const auto& [name, entry] : sec.store->entries()) {
            w.put_str(name);
            w.put<uint8_t>(entry.trainable ? 1 : 0);
            w.put<uint32_t>(static_cast<uint32_t>(entry.value->rank()));
            for (int64_t d : entry.value->shape()) w.put<int64_t>(d);
            w.put_f32s(*entry.value);
        }
        const auto* slots = sec.optimizer ? &sec.optimizer->slots() : nullptr;
        w.put<uint32_t>(slots ? static_cast<uint32_t>(slots->size()) : 0u);
        if (slots) {
            for (const auto& [name, slot] : *slots) {
                w.put_str(name);
                w.put<int64_t>(slot.step);
                w.put_f32s(slot.m);
                w.put_f32s(slot.v);
            }
        }
    }
    w.put_str(meta.rng_state);
    w.put_str(meta.history_json);
    io::atomic_write_file(path, w.take());
}

/// Loads a checkpoint into existing stores. Entry names and shapes must
/// match what the model construction created; the model id and variant must
/// match the expectation (pass empty strings to skip those checks).
template <class T>
CheckpointMeta<T> load_checkpoint(const std::string& path,
                                  const std::vector<CheckpointSection<T>>& sections,
                                  const std::string& expect_model_id = "",
                                  const std::string& expect_variant = "") {
    auto bytes = io::read_file_bytes(path);
    detail::ByteReader r(bytes);
    for (char c : detail::kCkptMagic)
        if (r.get<char>() != c) throw DataError("checkpoint: bad magic in " + path);
    const uint32_t version = r.get<uint32_t>();
    if (version != detail::kCkptVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    CheckpointMeta<T> meta;
    meta.model_id = r.get_str();
    meta.variant = r.get_str();
    meta.iteration = r.get<uint64_t>();
    if (!expect_model_id.empty() && meta.model_id != expect_model_id)
        throw DataError("checkpoint: model id '" + meta.model_id + "' does not match expected '" +
                        expect_model_id + "'");
    if (!expect_variant.empty() && meta.variant != expect_variant)
        throw DataError("checkpoint: variant '" + meta.variant + "' does not match expected '" +
                        expect_variant + "'");
    const uint32_t n_sections = r.get<uint32_t>();
    if (n_sections != sections.size())
        throw DataError("checkpoint: section count mismatch");
    for (const auto& sec : sections) {
        const std::string name = r.get_str();
        if (name != sec.name)
            throw DataError("checkpoint: expected section '" + sec.name + "', found '" + name +
                            "'");
        const uint32_t n_entries = r.get<uint32_t>();
        for (uint32_t i = 0; i < n_entries; ++i) {
            const std::string ename = r.get_str();
            const bool trainable = r.get<uint8_t>() != 0;
            const uint32_t rank = r.get<uint32_t>();
            Shape shape(rank);
            for (auto& d : shape) d = r.get<int64_t>();
            Tensor<T> value = r.template get_f32s<T>(shape);
            auto p = sec.store->find(ename);
            if (!p)
                throw DataError("checkpoint: store '" + sec.name + "' has no entry '" + ename +
                                "'");
            if (!shapes_equal(p->shape(), shape))
                throw ShapeError("checkpoint: entry '" + ename + "' shape " + shape_str(shape) +
                                 " != model shape " + shape_str(p->shape()));
            (void)trainable;
            *p = std::move(value);
        }
        const uint32_t n_slots = r.get<uint32_t>();
        if (sec.optimizer) sec.optimizer->slots().clear();
        for (uint32_t i = 0; i < n_slots; ++i) {
            const std::string sname = r.get_str();
            const int64_t step = r.get<int64_t>();
            auto p = sec.store->find(sname);
            if (!p) throw DataError("checkpoint: optimizer slot for unknown entry '" + sname + "'");
            Tensor<T> m = r.template get_f32s<T>(p->shape());
            Tensor<T> v = r.template get_f32s<T>(p->shape());
            if (sec.optimizer)
                sec.optimizer->slots()[sname] =
                    typename Adam<T>::Slot{std::move(m), std::move(v), step};
        }
    }
    meta.rng_state = r.get_str();
    meta.history_json = r.get_str();
    return meta;
}

}  // namespace arranger
