#include "anymodal/vocab.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "anymodal/binio.hpp"

namespace anymodal {

static const char * kIdentifierNames[(int) Identifier::COUNT] = {"polygon", "bbox", "pose", "shape", "color", "none"};

std::vector<std::string> pretokenize(const std::string & text) {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    };
    for (char ch : text) {
        if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
            flush();
        } else if (ch == '.' || ch == ',' || ch == '!' || ch == '?') {
            flush();
            words.push_back(std::string(1, ch));
        } else {
            cur += ch;
        }
    }
    flush();
    return words;
}

void Vocabulary::set_layout(const VocabConfig & cfg) {
    class_count_   = cfg.class_count;
    class_begin_   = 4 + kSentinels + (int) Identifier::COUNT;
    special_begin_ = class_begin_ + class_count_;
    pose_vq_begin_ = special_begin_ + kSpecialGroups * kSpecialBins;
    pose_vq_vocab_ = cfg.pose_vq_vocab;
    mask_vq_begin_ = pose_vq_begin_ + pose_vq_vocab_;
    mask_vq_vocab_ = cfg.mask_vq_vocab;
    pieces_begin_  = mask_vq_begin_ + mask_vq_vocab_;
    total_size_    = cfg.target_size;
}

void Vocabulary::index_pieces() {
    piece_ids_.clear();
    max_piece_len_ = 0;
    for (size_t i = 0; i < pieces_.size(); ++i) {
        piece_ids_[pieces_[i]] = pieces_begin_ + (int) i;
        max_piece_len_ = std::max(max_piece_len_, pieces_[i].size());
    }
}

int Vocabulary::sentinel_id(int k) const {
    if (k < 0 || k >= kSentinels) {
        throw CodecError(CodecError::Kind::out_of_range, "sentinel index " + std::to_string(k) + " out of range");
    }
    return 4 + k;
}

int Vocabulary::class_token_id(int class_id) const {
    if (class_id < 0 || class_id >= class_count_) {
        throw CodecError(CodecError::Kind::unknown_field, "class id " + std::to_string(class_id) + " out of range");
    }
    return class_begin_ + class_id;
}

int Vocabulary::special_value_id(int group, int value) const {
    if (group < 0 || group >= kSpecialGroups || value < 0 || value >= kSpecialBins) {
        throw CodecError(CodecError::Kind::out_of_range,
                         "special value v" + std::to_string(group) + "=" + std::to_string(value) + " out of range");
    }
    return special_begin_ + group * kSpecialBins + value;
}

int Vocabulary::pose_vq_id(int v) const {
    if (v < 0 || v >= pose_vq_vocab_) {
        throw CodecError(CodecError::Kind::out_of_range, "pose vq id " + std::to_string(v) + " out of range");
    }
    return pose_vq_begin_ + v;
}

int Vocabulary::mask_vq_id(int v) const {
    if (v < 0 || v >= mask_vq_vocab_) {
        throw CodecError(CodecError::Kind::out_of_range, "mask vq id " + std::to_string(v) + " out of range");
    }
    return mask_vq_begin_ + v;
}

Vocabulary Vocabulary::train(const std::vector<std::string> & corpus, const VocabConfig & cfg) {
    if (corpus.empty()) {
        throw ConfigError("vocabulary training corpus is empty");
    }
    Vocabulary v;
    v.set_layout(cfg);
    if (cfg.target_size <= v.pieces_begin_) {
        throw ConfigError("vocab target_size " + std::to_string(cfg.target_size) + " does not exceed the " +
                          std::to_string(v.pieces_begin_) + " reserved tokens");
    }
    const int capacity = cfg.target_size - v.pieces_begin_;

    // word frequencies, each word as an in-word symbol sequence
    std::map<std::string, long> word_freq;
    for (const auto & line : corpus) {
        for (const auto & w : pretokenize(line)) {
            word_freq[w]++;
        }
    }
    struct Word {
        std::vector<std::string> symbols;
        long freq;
    };
    std::vector<Word> words;
    std::map<std::string, long> unit_freq;
    for (const auto & [w, f] : word_freq) {
        Word word;
        word.freq = f;
        for (size_t i = 0; i < w.size(); ++i) {
            std::string sym = i == 0 ? std::string(1, w[i]) : "##" + std::string(1, w[i]);
            word.symbols.push_back(sym);
            unit_freq[sym] += f;
        }
        words.push_back(std::move(word));
    }

    if ((int) unit_freq.size() > capacity) {
        throw ConfigError("vocab target_size too small: " + std::to_string(unit_freq.size()) +
                          " base symbols need to fit in " + std::to_string(capacity) + " free slots");
    }
    for (const auto & [sym, f] : unit_freq) {
        (void) f;
        v.pieces_.push_back(sym); // base inventory in sorted (map) order
    }

    // greedy pair merges; ties broken by lexicographically smallest pair
    while ((int) v.pieces_.size() < capacity) {
        std::map<std::pair<std::string, std::string>, long> pair_freq;
        for (const auto & word : words) {
            for (size_t i = 0; i + 1 < word.symbols.size(); ++i) {
                pair_freq[{word.symbols[i], word.symbols[i + 1]}] += word.freq;
            }
        }
        std::pair<std::string, std::string> best;
        long best_freq = 0;
        for (const auto & [p, f] : pair_freq) {
            if (f > best_freq) {
                best_freq = f;
                best      = p;
            }
        }
        if (best_freq < 2) {
            break;
        }
        const std::string merged = best.first + (best.second.rfind("##", 0) == 0 ? best.second.substr(2) : best.second);
        v.pieces_.push_back(merged);
        for (auto & word : words) {
            std::vector<std::string> out;
            for (size_t i = 0; i < word.symbols.size(); ++i) {
                if (i + 1 < word.symbols.size() && word.symbols[i] == best.first &&
                    word.symbols[i + 1] == best.second) {
                    out.push_back(merged);
                    ++i;
                } else {
                    out.push_back(word.symbols[i]);
                }
            }
            word.symbols = std::move(out);
        }
    }

    // actual size <= target: ids form a bijection onto [0, size)
    v.total_size_ = v.pieces_begin_ + (int) v.pieces_.size();
    v.index_pieces();
    return v;
}

std::vector<int> Vocabulary::encode_text(const std::string & text) const {
    std::vector<int> ids;
    for (const auto & word : pretokenize(text)) {
        size_t pos = 0;
        while (pos < word.size()) {
            const std::string prefix = pos == 0 ? "" : "##";
            int         match_id  = -1;
            size_t      match_len = 0;
            const size_t longest = std::min(word.size() - pos, max_piece_len_);
            for (size_t len = longest; len >= 1; --len) {
                auto it = piece_ids_.find(prefix + word.substr(pos, len));
                if (it != piece_ids_.end()) {
                    match_id  = it->second;
                    match_len = len;
                    break;
                }
            }
            if (match_id < 0) {
                ids.push_back(unk_id());
                pos += 1;
            } else {
                ids.push_back(match_id);
                pos += match_len;
            }
        }
    }
    return ids;
}

std::string Vocabulary::decode_text(const std::vector<int> & ids) const {
    std::string out;
    for (int id : ids) {
        if (id == eos_id()) {
            break;
        }
        if (id == pad_id() || id == bos_id()) {
            continue;
        }
        if (id >= pieces_begin_ && id < pieces_begin_ + (int) pieces_.size()) {
            const std::string & piece = pieces_[(size_t) (id - pieces_begin_)];
            if (piece.rfind("##", 0) == 0) {
                out += piece.substr(2);
            } else {
                if (!out.empty()) {
                    out += ' ';
                }
                out += piece;
            }
        } else {
            if (!out.empty()) {
                out += ' ';
            }
            out += render_token(id);
        }
    }
    return out;
}

std::string Vocabulary::render_token(int id) const {
    if (id < 0 || id >= total_size_) {
        return "<bad:" + std::to_string(id) + ">";
    }
    if (id == pad_id()) return "[PAD]";
    if (id == eos_id()) return "[EOS]";
    if (id == unk_id()) return "[UNK]";
    if (id == bos_id()) return "[BOS]";
    if (is_sentinel(id)) return "[S" + std::to_string(sentinel_index(id)) + "]";
    if (is_identifier(id)) return kIdentifierNames[id - identifier_id((Identifier) 0)];
    if (is_class_token(id)) return "class:" + std::to_string(class_of_token(id));
    if (is_special_value(id)) return "v" + std::to_string(special_group(id)) + "=" + std::to_string(special_value(id));
    if (is_pose_vq(id)) return "pvq:" + std::to_string(pose_vq_value(id));
    if (is_mask_vq(id)) return "mvq:" + std::to_string(mask_vq_value(id));
    if (id >= pieces_begin_ && id < pieces_begin_ + (int) pieces_.size()) {
        return pieces_[(size_t) (id - pieces_begin_)];
    }
    return "<unassigned:" + std::to_string(id) + ">";
}

std::string Vocabulary::render_sequence(const std::vector<int> & ids) const {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) {
            out += ' ';
        }
        out += render_token(ids[i]);
    }
    return out;
}

void Vocabulary::save(const std::string & path) const {
    std::ostringstream os;
    os << "anymodal-vocab v1 " << total_size_ << " " << class_count_ << " " << pose_vq_vocab_ << " "
       << mask_vq_vocab_ << " " << pieces_.size() << "\n";
    for (const auto & p : pieces_) {
        os << p << "\n";
    }
    write_file_atomic(path, os.str());
}

Vocabulary Vocabulary::load(const std::string & path) {
    std::istringstream is(read_text_file(path));
    std::string        tag, ver;
    int    total = 0, classes = 0, pose_vq = 0, mask_vq = 0;
    size_t npieces = 0;
    if (!(is >> tag >> ver >> total >> classes >> pose_vq >> mask_vq >> npieces) || tag != "anymodal-vocab" ||
        ver != "v1") {
        throw ArtifactError("bad vocabulary header in " + path);
    }
    std::string rest;
    std::getline(is, rest);

    VocabConfig cfg;
    cfg.target_size   = total;
    cfg.class_count   = classes;
    cfg.pose_vq_vocab = pose_vq;
    cfg.mask_vq_vocab = mask_vq;

    Vocabulary v;
    v.set_layout(cfg);
    for (size_t i = 0; i < npieces; ++i) {
        std::string line;
        if (!std::getline(is, line)) {
            throw ArtifactError("truncated vocabulary file: " + path);
        }
        v.pieces_.push_back(line);
    }
    v.index_pieces();
    return v;
}

} // namespace anymodal
