#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "anymodal/errors.hpp"

namespace anymodal {

// Identifier control tokens used by the sequence grammars.
enum class Identifier : int { polygon = 0, bbox, pose, shape, color, none, COUNT };

struct VocabConfig {
    int target_size   = 30000;
    int pose_vq_vocab = 256; // reserved block for pose-VQ token ids
    int mask_vq_vocab = 256; // reserved block for instance-mask-VQ token ids
    int class_count   = 16;  // class-name control tokens
};

// Joint vocabulary over subword pieces, control tokens, the contiguous
// 4000-token special-value block (v0..v3, 1000 values each), and reserved
// VQ-id blocks for pose and instance-mask tokens.
//
// id layout:
//   [0..3]                PAD, EOS, UNK, BOS
//   [4..103]              sentinels S0..S99
//   [104..109]            identifiers: polygon bbox pose shape color none
//   [110..110+classes)    class-name tokens
//   [.. +4000)            special values v0=0..999, v1=.., v2=.., v3=..
//   [.. +pose_vq_vocab)   pose VQ ids
//   [.. +mask_vq_vocab)   instance-mask VQ ids
//   [.. size)             subword pieces
class Vocabulary {
  public:
    static constexpr int kSentinels    = 100;
    static constexpr int kSpecialBins  = 1000;
    static constexpr int kSpecialGroups = 4;

    // Greedy frequency pair merges over whitespace/punctuation pre-tokenized
    // words, continuation pieces marked with "##".
    static Vocabulary train(const std::vector<std::string> & corpus, const VocabConfig & cfg);

    int size() const { return total_size_; }
    int piece_count() const { return (int) pieces_.size(); }
    int reserved_size() const { return pieces_begin_; }

    // control tokens
    int pad_id() const { return 0; }
    int eos_id() const { return 1; }
    int unk_id() const { return 2; }
    int bos_id() const { return 3; }
    int sentinel_id(int k) const;
    int identifier_id(Identifier ident) const { return 4 + kSentinels + (int) ident; }
    int class_token_id(int class_id) const;

    bool is_sentinel(int id) const { return id >= 4 && id < 4 + kSentinels; }
    int  sentinel_index(int id) const { return id - 4; }
    bool is_identifier(int id) const {
        return id >= identifier_id((Identifier) 0) && id < identifier_id(Identifier::COUNT);
    }
    bool is_class_token(int id) const { return id >= class_begin_ && id < class_begin_ + class_count_; }
    int  class_of_token(int id) const { return id - class_begin_; }

    // special-value block: vK=n
    int  special_value_id(int group, int value) const;
    bool is_special_value(int id) const { return id >= special_begin_ && id < special_begin_ + 4000; }
    int  special_group(int id) const { return (id - special_begin_) / kSpecialBins; }
    int  special_value(int id) const { return (id - special_begin_) % kSpecialBins; }
    int  special_block_begin() const { return special_begin_; }

    // VQ-id blocks
    int  pose_vq_id(int v) const;
    int  mask_vq_id(int v) const;
    bool is_pose_vq(int id) const { return id >= pose_vq_begin_ && id < pose_vq_begin_ + pose_vq_vocab_; }
    bool is_mask_vq(int id) const { return id >= mask_vq_begin_ && id < mask_vq_begin_ + mask_vq_vocab_; }
    int  pose_vq_value(int id) const { return id - pose_vq_begin_; }
    int  mask_vq_value(int id) const { return id - mask_vq_begin_; }
    int  pose_vq_vocab() const { return pose_vq_vocab_; }
    int  mask_vq_vocab() const { return mask_vq_vocab_; }

    // subword text encode/decode (greedy longest match; unknown bytes -> UNK)
    std::vector<int> encode_text(const std::string & text) const;
    std::string      decode_text(const std::vector<int> & ids) const;

    // human-readable rendering of any id ("v1=5", "[S3]", "polygon", "##ing")
    std::string render_token(int id) const;
    std::string render_sequence(const std::vector<int> & ids) const;

    void              save(const std::string & path) const;
    static Vocabulary load(const std::string & path);

  private:
    int total_size_    = 0;
    int class_count_   = 0;
    int class_begin_   = 0;
    int special_begin_ = 0;
    int pose_vq_begin_ = 0, pose_vq_vocab_ = 0;
    int mask_vq_begin_ = 0, mask_vq_vocab_ = 0;
    int pieces_begin_  = 0;

    std::vector<std::string> pieces_; // subword pieces, id = pieces_begin_ + index
    std::unordered_map<std::string, int> piece_ids_;
    size_t max_piece_len_ = 0;

    void set_layout(const VocabConfig & cfg);
    void index_pieces();

    friend std::vector<std::string> pretokenize(const std::string & text);
};

// whitespace split with ., !, ? and , broken out as single-char words
std::vector<std::string> pretokenize(const std::string & text);

} // namespace anymodal
