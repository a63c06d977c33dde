#include "tegru/synthdata.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "tegru/rng.hpp"

namespace tegru::synthdata {

namespace {

const char* kPositive[] = {
    "好看", "精彩", "感人", "出色", "喜欢", "惊艳", "流畅", "用心",
    "经典", "满意", "良心", "温暖", "细腻", "震撼", "走心", "佳作",
    "耐看", "完美", "真诚", "舒服", "到位", "动人", "优秀", "享受",
};

const char* kNegative[] = {
    "难看", "无聊", "失望", "拖沓", "敷衍", "生硬", "尴尬", "俗套",
    "廉价", "浪费", "垃圾", "糟糕", "平庸", "做作", "混乱", "刻意",
    "难受", "崩坏", "乏味", "劣质", "空洞", "离谱", "粗糙", "折磨",
};

const char* kNegator = "不";

const char* kDistractors[] = {
    "这部", "电影", "剧情", "演员", "镜头", "音乐", "节奏", "台词",
    "画面", "结尾", "开头", "故事", "角色", "导演", "配乐", "特效",
    "今天", "昨天", "晚上", "周末", "朋友", "同事", "家人", "一起",
    "去看", "看完", "觉得", "感觉", "其实", "非常", "有点", "比较",
    "整体", "部分", "中间", "后半", "前半", "设定", "铺垫", "转折",
    "场景", "服装", "道具", "灯光", "剪辑", "表演", "情绪", "氛围",
    "真的", "确实", "大概", "可能", "应该", "已经", "还是", "就是",
    "一个", "两个", "这种", "那种", "很多", "不少", "几个", "某些",
    "影院", "票价", "座位", "屏幕", "时长", "预告", "评分", "评论",
    "原著", "改编", "翻拍", "续集", "系列", "班底", "阵容", "档期",
};

const char* kPunct[] = {"，", "。", "！", "？"};

const char* kJunk[] = {"~~", "@@", "##", "***", "（（", "））", "……"};

bool is_keyword(const std::string& token, int* polarity) {
  for (const char* w : kPositive) {
    if (token == w) {
      *polarity = 1;
      return true;
    }
  }
  for (const char* w : kNegative) {
    if (token == w) {
      *polarity = -1;
      return true;
    }
  }
  return false;
}

}  // namespace

int label_of(const std::vector<std::string>& tokens) {
  int net = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    int polarity = 0;
    if (!is_keyword(tokens[i], &polarity)) continue;
    bool negated = i > 0 && tokens[i - 1] == kNegator;
    net += negated ? -polarity : polarity;
  }
  if (net == 0) return -1;  // undecided, generator resamples these
  return net > 0 ? 1 : 0;
}

std::vector<textpipe::CorpusLine> make_corpus(const SynthOptions& opt) {
  if (opt.samples < 1) {
    throw std::invalid_argument("synthetic corpus needs at least one sample");
  }
  Rng rng(opt.seed);
  std::vector<textpipe::CorpusLine> corpus;
  corpus.reserve(static_cast<std::size_t>(opt.samples));

  auto pick = [&rng](auto& pool) {
    return std::string(pool[rng.uniform_int(std::size(pool))]);
  };

  for (int i = 0; i < opt.samples; ++i) {
    int want = i % 2;  // alternate labels for exact balance
    std::vector<std::string> tokens;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 200) {
        throw std::logic_error("synthetic generator failed to hit the label");
      }
      tokens.clear();
      int length = 8 + static_cast<int>(rng.uniform_int(17));  // 8..24
      int slots = 1 + static_cast<int>(rng.uniform_int(3));    // 1..3 keywords
      // choose keyword positions, spaced so negators stay unambiguous
      std::unordered_set<int> keyword_at;
      while (static_cast<int>(keyword_at.size()) < slots) {
        keyword_at.insert(1 + static_cast<int>(rng.uniform_int(
                                  static_cast<std::uint64_t>(length - 1))));
      }
      for (int t = 0; t < length; ++t) {
        if (keyword_at.count(t)) {
          bool negate = rng.uniform() < 0.35;
          if (negate) {
            if (!tokens.empty() && tokens.back() == kNegator) {
              tokens.pop_back();  // avoid double negators
            }
            tokens.push_back(kNegator);
          }
          tokens.push_back(rng.uniform() < 0.5 ? pick(kPositive)
                                               : pick(kNegative));
          continue;
        }
        double roll = rng.uniform();
        if (roll < 0.12) {
          tokens.push_back(pick(kPunct));
        } else if (roll < 0.16) {
          // stray negator bound to a distractor: order noise, no flip
          tokens.push_back(kNegator);
          tokens.push_back(pick(kDistractors));
        } else {
          tokens.push_back(pick(kDistractors));
        }
      }
      if (label_of(tokens) == want) break;
    }

    std::ostringstream text;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (t) text << ' ';
      text << tokens[t];
    }
    // unfiltered junk marks in some samples; preprocessing strips them
    if (rng.uniform() < 0.2) {
      text << ' ' << kJunk[rng.uniform_int(std::size(kJunk))];
    }
    corpus.push_back({want, text.str()});
  }
  return corpus;
}

void write_corpus(const std::string& path,
                  const std::vector<textpipe::CorpusLine>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus: " + path);
  for (const auto& line : lines) {
    out << line.label << '\t' << line.text << '\n';
  }
}

}  // namespace tegru::synthdata
