#include "mgcg/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <set>

#include "mgcg/errors.hpp"

namespace mgcg {

namespace {

const std::vector<std::string> kCities = {
    "Beijing",  "Shanghai",  "Guangzhou", "Shenzhen",     "Chengdu",  "Hangzhou", "Wuhan",
    "Xian",     "Nanjing",   "Tianjin",   "Chongqing",    "Suzhou",   "Changsha", "Qingdao",
    "Dalian",   "Xiamen",    "Kunming",   "Harbin",       "Jinan",    "Zhengzhou", "Shenyang",
    "Fuzhou",   "Hefei",     "Nanchang",  "Guiyang",      "Nanning",  "Lanzhou",  "Taiyuan",
    "Shijiazhuang", "Hohhot", "Urumqi",   "Lhasa",        "Xining",   "Yinchuan", "Haikou",
    "Sanya",    "Ningbo",    "Wuxi",      "Foshan",       "Dongguan", "Zhuhai",   "Wenzhou",
    "Changchun", "Tangshan", "Yantai",    "Luoyang",      "Guilin",   "Lijiang",  "Dali",
    "Weihai",   "Baoding",   "Zhongshan", "Huizhou",      "Yangzhou", "Shaoxing"};

const std::vector<std::string> kSurnames = {
    "Zhou", "Liu", "Wang", "Chen", "Li",   "Zhang", "Huang", "Zhao", "Wu",   "Xu",
    "Sun",  "Hu",  "Zhu",  "Gao",  "Lin",  "He",    "Guo",   "Ma",   "Luo",  "Liang",
    "Song", "Zheng", "Xie", "Han", "Tang", "Feng",  "Yu",    "Dong", "Xiao", "Cheng"};
const std::vector<std::string> kGivenNames = {
    "Xun", "Rene", "Jay", "Faye", "Andy", "Wei", "Fang", "Jing", "Lei",  "Yan",
    "Ming", "Hua", "Ting", "Bo",  "Kai",  "Yi",  "Qi",   "Lan",  "Mei",  "Jun",
    "Tao", "Xin", "Yun",  "Hao",  "Ning", "Rui", "Shan", "Lu",   "Dan",  "Zi"};
const std::vector<std::string> kMovieAdj = {
    "Stolen", "Silent", "Golden", "Broken",  "Hidden", "Lost",   "Burning", "Frozen", "Wild",
    "Distant", "Secret", "Eternal", "Crimson", "Fading", "Endless", "Bright", "Quiet", "Falling",
    "Rising", "Shattered"};
const std::vector<std::string> kMovieNoun = {
    "Life",   "River",  "City",   "Dream",  "Promise", "Horizon", "Memory", "Summer", "Winter",
    "Garden", "Journey", "Shadow", "Voyage", "Moon",   "Storm",   "Bridge", "Letter", "Mountain",
    "Harbor", "Lantern"};
const std::vector<std::string> kSongAdj = {"Blue",    "Rain",  "Spring",   "Ocean",  "Velvet",
                                           "Starlight", "Paper", "Autumn", "Midnight", "Silver"};
const std::vector<std::string> kSongNoun = {"Melody", "Ballad", "Serenade", "Echo",   "Rhapsody",
                                            "Lullaby", "Waltz", "Chorus",   "Anthem", "Tune"};
const std::vector<std::string> kNewsTopic = {"Festival", "Premiere", "Charity",   "Concert",
                                             "Award",    "Tour",     "Interview", "Wedding",
                                             "Comeback", "Documentary"};
const std::vector<std::string> kNewsKind = {"Headline", "Bulletin", "Flash"};
const std::vector<std::string> kFoodAdj = {"Spicy", "Braised", "Steamed", "Crispy",
                                           "Sweet", "Sour",    "Roast",   "Fried"};
const std::vector<std::string> kFoodNoun = {"Tofu", "Duck", "Noodles", "Dumplings",
                                            "Fish", "Pork", "Rice",    "Buns"};
const std::vector<std::string> kPoiWord = {"Jade",   "Lotus", "Dragon", "Phoenix", "Bamboo",
                                           "Peony",  "Pearl", "Maple",  "Orchid",  "Willow",
                                           "Cedar",  "Plum",  "Crane",  "Tiger",   "Cloud"};
const std::vector<std::string> kPoiKind = {"Restaurant", "Kitchen", "Bistro"};

const std::vector<std::string> kConstellations = {
    "Aries", "Taurus", "Gemini", "Cancer", "Leo", "Virgo", "Libra", "Scorpio",
    "Sagittarius", "Capricorn", "Aquarius", "Pisces"};
const std::vector<std::string> kStarComments = {
    "a talented and hardworking actor", "known for natural acting", "very kind to fans",
    "an elegant performer", "a versatile artist", "famous for a warm smile"};
const std::vector<std::string> kMovieCategories = {"war",    "comedy", "romance", "thriller",
                                                   "drama",  "family", "action",  "animation"};
const std::vector<std::string> kMovieComments = {
    "a moving story about family", "full of suspense",       "a touching war epic",
    "funny and warm",              "beautiful cinematography", "a classic worth watching",
    "the acting is superb",        "a heartwarming tale"};
const std::vector<std::string> kGenres = {"pop", "folk", "rock", "jazz", "ballad"};
const std::vector<std::string> kSongComments = {"a soothing melody", "catchy and upbeat",
                                                "full of emotion", "a timeless classic"};
const std::vector<std::string> kNewsContents = {
    "won the best actor award", "announced a new world tour", "donated to charity",
    "married in a private ceremony", "returned after a long break",
    "starred in a new documentary"};
const std::vector<std::string> kCuisines = {"sichuan", "cantonese", "hunan", "shandong"};
const std::vector<std::string> kIngredients = {"chili", "ginger", "garlic",
                                               "scallion", "soy", "sesame"};
const std::vector<std::string> kStreets = {"Zhongshan", "Renmin", "Jiefang",
                                           "Heping",    "Xinhua", "Wenhua"};
const std::vector<std::string> kWeather = {"sunny", "cloudy", "rainy", "windy", "foggy"};
const std::vector<std::string> kAgeRanges = {"under 18", "18-25", "26-35", "36-50", "over 50"};
const std::vector<std::string> kSurnamesZh = {"王", "李", "张", "刘", "陈",
                                              "杨", "黄", "赵", "吴", "周"};
const std::vector<std::string> kMaleZh = {"伟", "强", "磊", "军", "勇", "杰", "涛"};
const std::vector<std::string> kFemaleZh = {"芳", "娜", "敏", "静", "丽", "婷", "雪"};

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string fill(const std::string& pattern, const std::string& x) {
  std::string out = pattern;
  for (auto pos = out.find("{X}"); pos != std::string::npos; pos = out.find("{X}")) {
    out.replace(pos, 3, x);
  }
  return out;
}

}  // namespace

namespace phrases {

std::string attribute_phrase(const std::string& predicate) {
  static const std::map<std::string, std::string> kNames = {
      {"avg_price", "average price"}, {"starring", "leading star"}};
  auto it = kNames.find(predicate);
  return it == kNames.end() ? predicate : it->second;
}

std::string statement(const KnowledgeTriple& f) {
  const auto& s = f.subject;
  const auto& o = f.object;
  const auto& p = f.predicate;
  if (p == "starring") return "the leading star of " + s + " is " + o;
  if (p == "director") return s + " is directed by " + o;
  if (p == "rating") return s + " has a rating of " + o;
  if (p == "category") return s + " is a " + o + " movie";
  if (p == "comment") return "the comment on " + s + " is : " + o;
  if (p == "birthplace") return s + " was born in " + o;
  if (p == "constellation") return "the constellation of " + s + " is " + o;
  if (p == "height") return s + " is " + o + " tall";
  if (p == "singer") return s + " is sung by " + o;
  if (p == "genre") return s + " is a " + o + " song";
  if (p == "about") return s + " is news about " + o;
  if (p == "content") return "the news " + s + " says the star " + o;
  if (p == "cuisine") return s + " is a " + o + " dish";
  if (p == "ingredient") return "the main ingredient of " + s + " is " + o;
  if (p == "city") return s + " is located in " + o;
  if (p == "specialty") return "the specialty of " + s + " is " + o;
  if (p == "weather") return "the weather in " + s + " today is " + o;
  return "the " + attribute_phrase(p) + " of " + s + " is " + o;
}

std::string seeker_question(const KnowledgeTriple& f) {
  const auto& s = f.subject;
  const auto& p = f.predicate;
  if (p == "starring") return "Who is the leading star of " + s + " ?";
  if (p == "director") return "Who directed " + s + " ?";
  if (p == "birthplace") return "Where was " + s + " born ?";
  if (p == "singer") return "Who sings " + s + " ?";
  if (p == "city") return "Where is " + s + " located ?";
  if (p == "weather") return "What is the weather like in " + s + " today ?";
  if (p == "about") return "Who is the news " + s + " about ?";
  return "What is the " + attribute_phrase(p) + " of " + s + " ?";
}

std::string recommender_answer(const KnowledgeTriple& fact) {
  return capitalize(statement(fact)) + " .";
}

std::string seeker_greeting() { return "Hello !"; }

std::string seeker_closing(DialogType type, const std::string& topic, Rng& rng) {
  static const std::vector<std::string> kQa = {"Got it , thanks .", "I see , thank you ."};
  static const std::vector<std::string> kChat = {"{X} is really great , thanks for sharing .",
                                                 "Wonderful , thanks for telling me about {X} ."};
  static const std::vector<std::string> kTask = {"Great , thanks a lot .", "Perfect , thank you ."};
  switch (type) {
    case DialogType::QA: return rng.pick(kQa);
    case DialogType::Chitchat: return fill(rng.pick(kChat), topic);
    case DialogType::Task: return rng.pick(kTask);
    case DialogType::Recommendation: return seeker_reject(topic, rng);
  }
  return rng.pick(kQa);
}

std::string seeker_accept(const std::string& topic, Rng& rng) {
  static const std::vector<std::string> kAccept = {"Sounds good , I will try {X} .",
                                                   "Great choice , I will definitely check out {X} ."};
  return fill(rng.pick(kAccept), topic);
}

std::string seeker_reject(const std::string& topic, Rng& rng) {
  static const std::vector<std::string> kReject = {"Sorry , I am not interested in {X} , no thanks .",
                                                   "No thanks , {X} is not my style ."};
  return fill(rng.pick(kReject), topic);
}

std::string seeker_new_topic(const std::string& topic) {
  return "Actually , let us talk about " + topic + " instead .";
}

std::string seeker_more(const std::string& topic, Rng& rng) {
  static const std::vector<std::string> kMore = {"Tell me more about {X} .",
                                                 "Really ? What else about {X} ?"};
  return fill(rng.pick(kMore), topic);
}

std::string seeker_task_request(const std::string& domain, const std::string& topic) {
  if (domain == "weather") return "What is the weather like in " + topic + " today ?";
  if (domain == "music") return "Please play a song for me .";
  return "Yes , please book it .";
}

std::string recommender_farewell(Rng& rng) {
  static const std::vector<std::string> kBye = {"Enjoy it , goodbye !",
                                                "Have fun , see you next time !"};
  return rng.pick(kBye);
}

}  // namespace phrases

const std::vector<GoalSkeleton>& goal_skeletons() {
  using T = DialogType;
  static const std::vector<GoalSkeleton> kSkeletons = {
      {"qa-movie/star/movie", {{T::QA, "movie"}, {T::Chitchat, "star"}, {T::Recommendation, "movie"}}},
      {"qa-movie/star/music", {{T::QA, "movie"}, {T::Chitchat, "star"}, {T::Recommendation, "music"}}},
      {"qa-movie/star/news", {{T::QA, "movie"}, {T::Chitchat, "star"}, {T::Recommendation, "news"}}},
      {"qa-star/star/movie", {{T::QA, "star"}, {T::Chitchat, "star"}, {T::Recommendation, "movie"}}},
      {"qa-star/star/music", {{T::QA, "star"}, {T::Chitchat, "star"}, {T::Recommendation, "music"}}},
      {"qa-music/star/movie", {{T::QA, "music"}, {T::Chitchat, "star"}, {T::Recommendation, "movie"}}},
      {"qa-music/star/music", {{T::QA, "music"}, {T::Chitchat, "star"}, {T::Recommendation, "music"}}},
      {"chat-star/movie", {{T::Chitchat, "star"}, {T::Recommendation, "movie"}}},
      {"chat-star/music", {{T::Chitchat, "star"}, {T::Recommendation, "music"}}},
      {"news/star/movie", {{T::Chitchat, "news"}, {T::Chitchat, "star"}, {T::Recommendation, "movie"}}},
      {"news/star/music", {{T::Chitchat, "news"}, {T::Chitchat, "star"}, {T::Recommendation, "music"}}},
      {"qa-food/food/poi", {{T::QA, "food"}, {T::Chitchat, "food"}, {T::Recommendation, "poi"}}},
      {"chat-food/poi", {{T::Chitchat, "food"}, {T::Recommendation, "poi"}}},
      {"weather/poi", {{T::Task, "weather"}, {T::Recommendation, "poi"}}},
      {"play/star/movie", {{T::Task, "music"}, {T::Chitchat, "star"}, {T::Recommendation, "movie"}}},
      {"play/star/music", {{T::Task, "music"}, {T::Chitchat, "star"}, {T::Recommendation, "music"}}},
      {"news/star/news", {{T::Chitchat, "news"}, {T::Chitchat, "star"}, {T::Recommendation, "news"}}},
      {"play/star/news", {{T::Task, "music"}, {T::Chitchat, "star"}, {T::Recommendation, "news"}}},
      {"qa-star/star/news", {{T::QA, "star"}, {T::Chitchat, "star"}, {T::Recommendation, "news"}}},
      {"qa-poi/book/food", {{T::QA, "poi"}, {T::Task, "poi"}, {T::Recommendation, "food"}}},
  };
  return kSkeletons;
}

namespace {

struct WorldBuilder {
  Rng& rng;
  std::vector<KnowledgeTriple> triples;
  std::map<std::string, std::string> domains;
  std::map<std::string, std::vector<std::string>> by_domain;

  void add(const std::string& s, const std::string& p, const std::string& o) {
    triples.push_back({s, p, o});
  }

  std::vector<std::string> names(const std::vector<std::string>& a,
                                 const std::vector<std::string>& b, std::size_t n,
                                 const std::string& domain) {
    std::vector<std::string> all;
    for (const auto& x : a) {
      for (const auto& y : b) all.push_back(x + " " + y);
    }
    rng.shuffle(all);
    if (n > all.size()) throw ConfigError("graph_size too large for the " + domain + " name pool");
    all.resize(n);
    std::sort(all.begin(), all.end());
    for (const auto& e : all) domains[e] = domain;
    by_domain[domain] = all;
    return all;
  }
};

std::size_t share(std::size_t total, double frac, std::size_t min) {
  return std::max(min, static_cast<std::size_t>(static_cast<double>(total) * frac));
}

KnowledgeGraph build_graph(const SynthConfig& cfg, Rng& rng) {
  WorldBuilder w{rng, {}, {}, {}};
  const std::size_t n = cfg.graph_size;
  auto stars = w.names(kGivenNames, kSurnames, share(n, 0.20, 8), "star");
  auto movies = w.names(kMovieAdj, kMovieNoun, share(n, 0.25, 10), "movie");
  auto songs = w.names(kSongAdj, kSongNoun, share(n, 0.15, 6), "music");
  auto news = w.names(kNewsTopic, kNewsKind, share(n, 0.10, 4), "news");
  auto foods = w.names(kFoodAdj, kFoodNoun, share(n, 0.10, 4), "food");
  auto pois = w.names(kPoiWord, kPoiKind, share(n, 0.12, 6), "poi");
  std::vector<std::string> cities = kCities;
  rng.shuffle(cities);
  cities.resize(std::min(cities.size(), share(n, 0.08, 4)));
  std::sort(cities.begin(), cities.end());
  for (const auto& c : cities) w.domains[c] = "weather";

  for (const auto& s : stars) {
    w.add(s, "birthplace", rng.pick(cities));
    w.add(s, "constellation", rng.pick(kConstellations));
    w.add(s, "height", std::to_string(155 + rng.uniform_index(36)) + "cm");
    w.add(s, "comment", rng.pick(kStarComments));
  }
  for (std::size_t i = 0; i < movies.size(); ++i) {
    const auto& m = movies[i];
    // Round-robin the leading star so every star has films.
    const auto& lead = stars[i % stars.size()];
    w.add(m, "starring", lead);
    std::string director = rng.pick(stars);
    while (director == lead) director = rng.pick(stars);
    w.add(m, "director", director);
    w.add(m, "rating", std::to_string(6 + rng.uniform_index(4)) + "." +
                           std::to_string(rng.uniform_index(10)));
    w.add(m, "category", rng.pick(kMovieCategories));
    w.add(m, "comment", rng.pick(kMovieComments));
  }
  // Singers are the first part of the (shuffled) star list.
  std::vector<std::string> singers = stars;
  rng.shuffle(singers);
  singers.resize(std::max<std::size_t>(2, stars.size() / 2));
  for (std::size_t i = 0; i < songs.size(); ++i) {
    w.add(songs[i], "singer", singers[i % singers.size()]);
    w.add(songs[i], "genre", rng.pick(kGenres));
    w.add(songs[i], "comment", rng.pick(kSongComments));
  }
  for (std::size_t i = 0; i < news.size(); ++i) {
    w.add(news[i], "about", rng.pick(stars));
    w.add(news[i], "content", rng.pick(kNewsContents));
  }
  for (const auto& f : foods) {
    w.add(f, "cuisine", rng.pick(kCuisines));
    w.add(f, "ingredient", rng.pick(kIngredients));
  }
  for (std::size_t i = 0; i < pois.size(); ++i) {
    const auto& p = pois[i];
    w.add(p, "city", cities[i % cities.size()]);
    w.add(p, "specialty", foods[i % foods.size()]);
    w.add(p, "avg_price", std::to_string(30 + 5 * rng.uniform_index(30)) + " yuan");
    w.add(p, "score", std::to_string(3 + rng.uniform_index(2)) + "." +
                          std::to_string(rng.uniform_index(10)));
    w.add(p, "address", std::to_string(1 + rng.uniform_index(99)) + " " + rng.pick(kStreets) +
                            " Street");
  }
  for (const auto& c : cities) {
    w.add(c, "weather", rng.pick(kWeather) + " , " + std::to_string(5 + rng.uniform_index(30)) +
                            " degrees");
  }
  return KnowledgeGraph::from_triples(std::move(w.triples), std::move(w.domains));
}

std::string domain_of(const KnowledgeGraph& g, const std::string& e) {
  return g.domain_of(e).value_or("");
}

std::vector<std::string> entities_in(const KnowledgeGraph& g, const std::string& domain) {
  std::vector<std::string> out;
  for (const auto& [e, d] : g.entity_domains()) {
    if (d == domain) out.push_back(e);
  }
  return out;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

SeekerProfile sample_profile(const KnowledgeGraph& g, std::size_t k, Rng& rng) {
  SeekerProfile p;
  char id[16];
  std::snprintf(id, sizeof(id), "s%04zu", k);
  p.seeker_id = id;
  p.gender = rng.bernoulli(0.5) ? "male" : "female";
  p.name = rng.pick(kSurnamesZh) + rng.pick(p.gender == "male" ? kMaleZh : kFemaleZh);
  const std::size_t age = rng.uniform_index(kAgeRanges.size());
  p.age_range = kAgeRanges[age];
  p.city = rng.pick(kCities);
  if (age == 0) {
    p.occupation = Occupation::Student;
  } else if (age == 1) {
    p.occupation = rng.bernoulli(0.5) ? Occupation::Student : Occupation::Worker;
  } else if (age == 4) {
    p.occupation = Occupation::Retirement;
  } else {
    p.occupation = Occupation::Worker;
  }
  std::vector<std::string> rec_domains = {"movie", "music", "news", "food", "poi"};
  rng.shuffle(rec_domains);
  const std::size_t n_pref = 1 + rng.uniform_index(2);
  p.preferred_domains.assign(rec_domains.begin(), rec_domains.begin() + static_cast<std::ptrdiff_t>(n_pref));
  p.disliked_domains.push_back(rec_domains[n_pref]);
  const std::size_t n_seed = 1 + rng.uniform_index(2);
  for (std::size_t i = 0; i < n_seed; ++i) {
    const auto pool = entities_in(g, p.preferred_domains[i % p.preferred_domains.size()]);
    if (pool.empty()) continue;
    const auto& e = rng.pick(pool);
    if (!contains(p.seed_entities, e)) p.seed_entities.push_back(e);
  }
  return p;
}

double similarity(const KnowledgeGraph& g, const SeekerProfile& p, const std::string& e) {
  double s = contains(p.preferred_domains, domain_of(g, e)) ? 0.5 : 0.0;
  for (const auto* list : {&p.seed_entities, &p.accepted_entities}) {
    for (const auto& a : *list) {
      if (g.distance(e, a, 2)) s += 1.0;
    }
  }
  return s;
}

struct Instantiation {
  std::vector<Goal> goals;
  std::vector<std::string> domains;
  std::vector<InteractionOp> ops;
  std::vector<Initiator> initiators;
};

class Planner {
 public:
  Planner(const KnowledgeGraph& g, const SeekerProfile& p, const std::vector<std::string>& anchors,
          Rng& rng)
      : g_(g), p_(p), anchors_(anchors), rng_(rng) {}

  /// Entities of `domain` related to `prev`: prev itself when allowed and of
  /// the same domain, else its 1-hop neighbours of that domain, else 2-hop.
  std::vector<std::string> related(const std::string& prev, const std::string& domain,
                                   bool allow_same) const {
    const std::string want = domain == "weather" ? "weather" : domain;
    if (allow_same && domain_of(g_, prev) == want) return {prev};
    std::vector<std::string> out;
    for (const auto& e : g_.neighbors(prev, 1)) {
      if (domain_of(g_, e) == want) out.push_back(e);
    }
    if (out.empty()) {
      for (const auto& e : g_.neighbors(prev, 2)) {
        if (domain_of(g_, e) == want) out.push_back(e);
      }
    }
    return out;
  }

  std::vector<std::string> usable_targets(std::vector<std::string> c,
                                          const std::vector<std::string>& used) const {
    c.erase(std::remove_if(c.begin(), c.end(),
                           [&](const std::string& e) {
                             return contains(used, e) || contains(p_.rejected_entities, e) ||
                                    contains(p_.accepted_entities, e);
                           }),
            c.end());
    return c;
  }

  std::string pick_by_similarity(const std::vector<std::string>& c, bool high) {
    double best = high ? -1e9 : 1e9;
    std::vector<std::string> ties;
    for (const auto& e : c) {
      const double s = similarity(g_, p_, e);
      if ((high && s > best) || (!high && s < best)) {
        best = s;
        ties = {e};
      } else if (s == best) {
        ties.push_back(e);
      }
    }
    return rng_.pick(ties);
  }

  std::string anchor(const std::string& domain) {
    std::string want = domain;
    std::vector<std::string> pool = entities_in(g_, want);
    if (domain == "weather") {
      // Cities that host at least one restaurant, preferring the seeker's own.
      std::vector<std::string> with_poi;
      for (const auto& c : pool) {
        if (!related(c, "poi", false).empty()) with_poi.push_back(c);
      }
      if (contains(with_poi, p_.city)) return p_.city;
      pool = with_poi;
    }
    pool.erase(std::remove_if(pool.begin(), pool.end(),
                              [&](const std::string& e) { return contains(p_.rejected_entities, e); }),
               pool.end());
    if (pool.empty()) return {};
    std::vector<std::string> seeds;
    for (const auto& e : pool) {
      if (contains(p_.seed_entities, e)) seeds.push_back(e);
    }
    if (!seeds.empty() && rng_.bernoulli(0.25)) return rng_.pick(seeds);
    std::vector<std::string> fresh;
    for (const auto& e : pool) {
      if (!contains(anchors_, e)) fresh.push_back(e);
    }
    if (!fresh.empty()) pool = std::move(fresh);
    if (rng_.bernoulli(0.5)) return rng_.pick(pool);
    return pick_by_similarity(pool, true);
  }

  std::optional<Instantiation> instantiate(const GoalSkeleton& sk) {
    Instantiation out;
    std::vector<std::string> used_rec;
    std::string prev;
    for (std::size_t i = 0; i < sk.goals.size(); ++i) {
      const auto& sg = sk.goals[i];
      std::string topic;
      if (i == 0) {
        topic = anchor(sg.domain);
      } else if (sg.type == DialogType::Recommendation) {
        auto c = usable_targets(related(prev, sg.domain, false), used_rec);
        if (c.empty()) return std::nullopt;
        topic = pick_by_similarity(c, true);
      } else {
        auto c = related(prev, sg.domain, true);
        if (c.empty()) return std::nullopt;
        topic = rng_.pick(c);
      }
      if (topic.empty()) return std::nullopt;
      out.goals.push_back({sg.type, topic, ""});
      out.domains.push_back(sg.domain);
      out.ops.push_back(InteractionOp::None);
      out.initiators.push_back(i == 0 && sg.type != DialogType::Chitchat ? Initiator::Seeker
                                                                          : Initiator::Recommender);
      if (sg.type == DialogType::Recommendation) used_rec.push_back(topic);
      prev = topic;
    }
    insert_operation(out, used_rec);
    return out;
  }

 private:
  void insert_operation(Instantiation& inst, std::vector<std::string>& used_rec) {
    const std::size_t last = inst.goals.size() - 1;
    const std::string domain = inst.domains[last];
    const std::string topic = inst.goals[last].topic;
    static const std::vector<InteractionOp> kOps = {InteractionOp::RejectInitial,
                                                    InteractionOp::NewTopic,
                                                    InteractionOp::AskQuestion,
                                                    InteractionOp::Accept};
    InteractionOp op = rng_.pick(kOps);
    auto follow_up = [&]() {
      return rng_.bernoulli(0.5) ? InteractionOp::Accept : InteractionOp::AskQuestion;
    };
    if (op == InteractionOp::RejectInitial) {
      // The initially recommended entity is swapped for a poorly matching one
      // that the seeker turns down, followed by a related second proposal.
      auto prev = last > 0 ? inst.goals[last - 1].topic : topic;
      auto c = usable_targets(related(prev, domain, false), {});
      if (c.size() >= 2) {
        const std::string rejected = pick_by_similarity(c, false);
        auto second = usable_targets(related(rejected, domain, false), used_rec);
        second.erase(std::remove(second.begin(), second.end(), rejected), second.end());
        if (!second.empty()) {
          inst.goals[last].topic = rejected;
          inst.ops[last] = InteractionOp::RejectInitial;
          const auto accepted = pick_by_similarity(second, true);
          inst.goals.push_back({DialogType::Recommendation, accepted, ""});
          inst.domains.push_back(domain);
          inst.ops.push_back(follow_up());
          inst.initiators.push_back(Initiator::Recommender);
          return;
        }
      }
      op = InteractionOp::Accept;
    }
    if (op == InteractionOp::NewTopic) {
      const std::string bridge_domain = domain == "poi" ? "food" : "star";
      if (domain != "food") {
        auto bridges = related(topic, bridge_domain, false);
        if (last > 0) {
          bridges.erase(std::remove(bridges.begin(), bridges.end(), inst.goals[last - 1].topic),
                        bridges.end());
        }
        for (std::size_t attempt = 0; attempt < bridges.size() && !bridges.empty(); ++attempt) {
          const auto bridge = rng_.pick(bridges);
          auto targets = usable_targets(related(bridge, domain, false), used_rec);
          if (targets.empty()) continue;
          inst.ops[last] = InteractionOp::NewTopic;
          inst.goals.push_back({DialogType::Chitchat, bridge, ""});
          inst.domains.push_back(bridge_domain);
          inst.ops.push_back(InteractionOp::None);
          inst.initiators.push_back(Initiator::Recommender);
          const auto target = pick_by_similarity(targets, true);
          used_rec.push_back(target);
          inst.goals.push_back({DialogType::Recommendation, target, ""});
          inst.domains.push_back(domain);
          inst.ops.push_back(follow_up());
          inst.initiators.push_back(Initiator::Recommender);
          return;
        }
      }
      op = InteractionOp::Accept;
    }
    inst.ops[last] = op;
  }

  const KnowledgeGraph& g_;
  const SeekerProfile& p_;
  const std::vector<std::string>& anchors_;
  Rng& rng_;
};

struct Line {
  Speaker speaker;
  std::string text;
  std::vector<KnowledgeTriple> knowledge;
};

std::vector<KnowledgeTriple> facts_of(const KnowledgeGraph& g, const std::string& e) {
  std::vector<KnowledgeTriple> out;
  for (auto id : g.subject_triples(e)) out.push_back(g.triples()[id]);
  return out;
}

std::optional<KnowledgeTriple> link_between(const KnowledgeGraph& g, const std::string& a,
                                            const std::string& b) {
  if (a.empty() || a == b) return std::nullopt;
  for (auto id : g.incident_triples(a)) {
    const auto& t = g.triples()[id];
    if ((t.subject == a && t.object == b) || (t.subject == b && t.object == a)) return t;
  }
  return std::nullopt;
}

std::string describe_goal(const Goal& g, InteractionOp op, Initiator who) {
  std::string d = std::string(who == Initiator::Seeker ? "The seeker" : "The recommender") +
                  " starts a " + std::string(to_string(g.type)) + " sub-dialog about " + g.topic;
  switch (op) {
    case InteractionOp::Accept: d += "; the seeker accepts the recommendation"; break;
    case InteractionOp::RejectInitial: d += "; the seeker rejects the initial recommendation"; break;
    case InteractionOp::NewTopic: d += "; the seeker mentions a new topic"; break;
    case InteractionOp::AskQuestion: d += "; the seeker asks a question, then accepts"; break;
    case InteractionOp::None: break;
  }
  return d + ".";
}

class Realizer {
 public:
  Realizer(const KnowledgeGraph& g, Rng& rng) : g_(g), rng_(rng) {}

  std::vector<std::vector<Line>> realize(const Instantiation& inst) {
    std::vector<std::vector<Line>> spans;
    for (std::size_t i = 0; i < inst.goals.size(); ++i) {
      const bool first = i == 0;
      const bool last = i + 1 == inst.goals.size();
      const std::string prev = first ? "" : inst.goals[i - 1].topic;
      spans.push_back(realize_goal(inst.goals[i], inst.domains[i], inst.ops[i], prev, first, last));
    }
    return spans;
  }

 private:
  KnowledgeTriple pick_fact(const std::string& e, const std::set<std::string>& avoid_predicates,
                            const std::string& avoid_object = "") {
    std::vector<KnowledgeTriple> pool;
    for (auto& f : facts_of(g_, e)) {
      if (!avoid_predicates.count(f.predicate) && f.object != avoid_object) pool.push_back(f);
    }
    if (pool.empty()) pool = facts_of(g_, e);
    return rng_.pick(pool);
  }

  std::vector<Line> realize_goal(const Goal& goal, const std::string& domain, InteractionOp op,
                                 const std::string& prev, bool first, bool last) {
    std::vector<Line> out;
    const auto& x = goal.topic;
    const auto link = link_between(g_, prev, x);
    std::set<std::string> said;
    auto closing = [&](DialogType t) {
      if (!last) out.push_back({Speaker::Seeker, phrases::seeker_closing(t, x, rng_), {}});
    };

    switch (goal.type) {
      case DialogType::QA: {
        const std::size_t n_questions = 1 + rng_.uniform_index(2);
        if (!first) {
          out.push_back({Speaker::Recommender, "Do you have any questions about " + x + " ?", {}});
        }
        for (std::size_t q = 0; q < n_questions; ++q) {
          const auto f = pick_fact(x, said);
          said.insert(f.predicate);
          out.push_back({Speaker::Seeker, phrases::seeker_question(f), {}});
          out.push_back({Speaker::Recommender, phrases::recommender_answer(f), {f}});
        }
        closing(DialogType::QA);
        break;
      }
      case DialogType::Chitchat: {
        const auto f1 = pick_fact(x, said, prev);
        said.insert(f1.predicate);
        if (first) {
          out.push_back({Speaker::Seeker, phrases::seeker_greeting(), {}});
          out.push_back({Speaker::Recommender,
                         "Hi ! Do you know " + x + " ? " + phrases::recommender_answer(f1), {f1}});
        } else if (link) {
          out.push_back({Speaker::Recommender,
                         "By the way , " + phrases::statement(*link) + " . " +
                             phrases::recommender_answer(f1),
                         {*link, f1}});
        } else {
          out.push_back({Speaker::Recommender,
                         "By the way , do you know " + x + " ? " + phrases::recommender_answer(f1),
                         {f1}});
        }
        out.push_back({Speaker::Seeker, phrases::seeker_more(x, rng_), {}});
        const auto f2 = pick_fact(x, said, prev);
        out.push_back({Speaker::Recommender, phrases::recommender_answer(f2), {f2}});
        closing(DialogType::Chitchat);
        break;
      }
      case DialogType::Task: {
        std::vector<KnowledgeTriple> kn;
        std::string reply;
        if (domain == "weather") {
          const auto f = facts_of(g_, x);
          const auto it = std::find_if(f.begin(), f.end(),
                                       [](const auto& t) { return t.predicate == "weather"; });
          kn.push_back(*it);
          reply = phrases::recommender_answer(*it);
        } else if (domain == "music") {
          const auto f = facts_of(g_, x);
          const auto it = std::find_if(f.begin(), f.end(),
                                       [](const auto& t) { return t.predicate == "singer"; });
          kn.push_back(*it);
          reply = "OK , playing " + x + " for you . " + phrases::recommender_answer(*it);
        } else {
          const auto f = facts_of(g_, x);
          const auto it = std::find_if(f.begin(), f.end(),
                                       [](const auto& t) { return t.predicate == "address"; });
          kn.push_back(*it);
          reply = "Done , I have booked a table at " + x + " for you . " +
                  phrases::recommender_answer(*it);
        }
        if (first) {
          out.push_back({Speaker::Seeker, phrases::seeker_task_request(domain, x), {}});
        } else {
          const std::string offer = domain == "weather" ? "Shall I check the weather in " + x + " ?"
                                    : domain == "music" ? "Shall I play " + x + " for you ?"
                                                        : "Would you like me to book a table at " + x + " ?";
          out.push_back({Speaker::Recommender, offer, {}});
          out.push_back({Speaker::Seeker, "Yes , please .", {}});
        }
        out.push_back({Speaker::Recommender, reply, kn});
        closing(DialogType::Task);
        break;
      }
      case DialogType::Recommendation: {
        const auto f1 = pick_fact(x, said, prev);
        said.insert(f1.predicate);
        std::string pitch = "I recommend " + x + " . ";
        std::vector<KnowledgeTriple> kn;
        if (link) {
          pitch += phrases::recommender_answer(*link) + " ";
          kn.push_back(*link);
        }
        pitch += phrases::recommender_answer(f1) + " I think you will like it .";
        kn.push_back(f1);
        if (first) out.push_back({Speaker::Seeker, phrases::seeker_greeting(), {}});
        out.push_back({Speaker::Recommender, pitch, kn});
        switch (op) {
          case InteractionOp::RejectInitial:
            out.push_back({Speaker::Seeker, phrases::seeker_reject(x, rng_), {}});
            break;
          case InteractionOp::NewTopic:
            break;  // the seeker utterance naming the new topic is added by the caller
          case InteractionOp::AskQuestion: {
            const auto f2 = pick_fact(x, said);
            out.push_back({Speaker::Seeker, phrases::seeker_question(f2), {}});
            out.push_back({Speaker::Recommender, phrases::recommender_answer(f2), {f2}});
            out.push_back({Speaker::Seeker, phrases::seeker_accept(x, rng_), {}});
            break;
          }
          case InteractionOp::Accept:
          case InteractionOp::None:
            out.push_back({Speaker::Seeker, phrases::seeker_accept(x, rng_), {}});
            break;
        }
        if (last) out.push_back({Speaker::Recommender, phrases::recommender_farewell(rng_), {}});
        break;
      }
    }
    return out;
  }

  const KnowledgeGraph& g_;
  Rng& rng_;
};

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SynthConfig& cfg) {
  if (cfg.n_seekers < 3) throw ConfigError("generate_synthetic_corpus: n_seekers must be >= 3");
  if (cfg.dialogs_per_seeker < 1) throw ConfigError("dialogs_per_seeker must be >= 1");
  if (cfg.graph_size < 40) throw ConfigError("graph_size must be >= 40");
  if (cfg.graph_size > 2000) throw ConfigError("graph_size must be <= 2000");

  Rng rng(mix_seed(cfg.seed, 0x5e7a));
  SyntheticCorpus corpus;
  corpus.graph = build_graph(cfg, rng);
  const auto& g = corpus.graph;
  const auto& skeletons = goal_skeletons();

  for (std::size_t k = 0; k < cfg.n_seekers; ++k) {
    SeekerProfile profile = sample_profile(g, k, rng);
    std::vector<std::string> anchors;
    for (std::size_t i = 0; i < cfg.dialogs_per_seeker; ++i) {
      std::vector<std::size_t> eligible;
      for (std::size_t s = 0; s < skeletons.size(); ++s) {
        const auto& final_domain = skeletons[s].goals.back().domain;
        if (contains(profile.preferred_domains, final_domain)) eligible.push_back(s);
      }
      if (eligible.empty()) {
        for (std::size_t s = 0; s < skeletons.size(); ++s) eligible.push_back(s);
      }

      std::optional<Instantiation> inst;
      for (int attempt = 0; attempt < 200 && !inst; ++attempt) {
        // Fall back to any skeleton after repeated failures.
        const std::size_t s = attempt < 100 ? rng.pick(eligible) : rng.uniform_index(skeletons.size());
        Planner planner(g, profile, anchors, rng);
        inst = planner.instantiate(skeletons[s]);
        if (inst && !validate_goal_sequence(GoalSequence(inst->goals), g, profile).ok()) {
          inst.reset();
        }
      }
      if (!inst) throw Error("could not instantiate a valid goal sequence; enlarge graph_size");

      anchors.push_back(inst->goals.front().topic);
      Realizer realizer(g, rng);
      auto spans = realizer.realize(*inst);

      DialogRecord rec;
      rec.seeker_id = profile.seeker_id;
      rec.dialog_index = i;
      rec.profile = profile;
      rec.operations = inst->ops;
      rec.initiators = inst->initiators;
      std::vector<std::pair<std::string, Outcome>> outcomes;
      for (std::size_t gi = 0; gi < inst->goals.size(); ++gi) {
        Goal goal = inst->goals[gi];
        goal.description = describe_goal(goal, inst->ops[gi], inst->initiators[gi]);
        rec.goals.push_back(goal);
        if (inst->ops[gi] == InteractionOp::NewTopic) {
          spans[gi].push_back({Speaker::Seeker, phrases::seeker_new_topic(inst->goals[gi + 1].topic), {}});
        }
        for (auto& line : spans[gi]) {
          rec.turns.push_back({line.speaker, line.text, gi, line.knowledge});
        }
        switch (inst->ops[gi]) {
          case InteractionOp::RejectInitial: outcomes.emplace_back(goal.topic, Outcome::Rejected); break;
          case InteractionOp::Accept:
          case InteractionOp::AskQuestion: outcomes.emplace_back(goal.topic, Outcome::Accepted); break;
          default: break;
        }
      }

      std::set<KnowledgeTriple> subset;
      for (const auto& goal : rec.goals) {
        for (auto id : g.incident_triples(goal.topic)) subset.insert(g.triples()[id]);
        for (const auto& n : g.neighbors(goal.topic, 1)) {
          for (auto id : g.subject_triples(n)) subset.insert(g.triples()[id]);
        }
      }
      for (const auto& u : rec.turns) subset.insert(u.knowledge.begin(), u.knowledge.end());
      for (const auto& t : g.triples()) {
        if (subset.count(t)) rec.knowledge.push_back(t);
      }

      profile = update_profile(profile, outcomes, &g);
      rec.profile_after = profile;
      validate_record(rec);
      corpus.records.push_back(std::move(rec));
    }
  }
  corpus.stats = corpus_stats(corpus.records);
  return corpus;
}

void save_synthetic_corpus(const SyntheticCorpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  save_corpus(corpus.records, (base / "dialogs.jsonl").string());
  save_graph(corpus.graph, (base / "knowledge.jsonl").string(), (base / "entities.jsonl").string());
}

SyntheticCorpus load_synthetic_corpus(const std::string& dir) {
  const std::filesystem::path base(dir);
  SyntheticCorpus corpus;
  const auto tags = base / "entities.jsonl";
  corpus.graph = load_graph((base / "knowledge.jsonl").string(),
                            std::filesystem::exists(tags) ? tags.string() : "");
  corpus.records = load_corpus((base / "dialogs.jsonl").string());
  corpus.stats = corpus_stats(corpus.records);
  return corpus;
}

}  // namespace mgcg
