#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aaseg {

/// Actor and action class sets plus the set of valid actor-action pairs.
/// Background is an ordinary class in both lists; the background pair is
/// always valid. Pair order is preserved, so joint class indices are stable.
class Taxonomy {
  public:
    Taxonomy(std::vector<std::string> actor_names, std::vector<std::string> action_names,
             std::vector<std::pair<int, int>> valid_pairs, int background_actor,
             int background_action)
        : actor_names_(std::move(actor_names)), action_names_(std::move(action_names)),
          pairs_(std::move(valid_pairs)), background_actor_(background_actor),
          background_action_(background_action) {
        if (actor_names_.size() < 2 || action_names_.size() < 2)
            throw std::invalid_argument("Taxonomy: need background plus at least one real class");
        if (pairs_.empty()) throw std::invalid_argument("Taxonomy: valid_pairs is empty");
        for (std::size_t i = 0; i < pairs_.size(); ++i) {
            const auto [a, c] = pairs_[i];
            if (a < 0 || a >= num_actors() || c < 0 || c >= num_actions())
                throw std::invalid_argument("Taxonomy: pair index out of range");
            if (!pair_to_joint_.emplace(pairs_[i], static_cast<int>(pair_to_joint_.size())).second)
                throw std::invalid_argument("Taxonomy: duplicate valid pair");
        }
        if (background_actor_ < 0 || background_actor_ >= num_actors() ||
            background_action_ < 0 || background_action_ >= num_actions())
            throw std::invalid_argument("Taxonomy: background index out of range");
        if (!pair_to_joint_.count({background_actor_, background_action_}))
            throw std::invalid_argument("Taxonomy: background pair must be a valid pair");
    }

    int num_actors() const { return static_cast<int>(actor_names_.size()); }
    int num_actions() const { return static_cast<int>(action_names_.size()); }
    int num_pairs() const { return static_cast<int>(pairs_.size()); }

    const std::vector<std::string>& actor_names() const { return actor_names_; }
    const std::vector<std::string>& action_names() const { return action_names_; }
    const std::vector<std::pair<int, int>>& valid_pairs() const { return pairs_; }
    int background_actor() const { return background_actor_; }
    int background_action() const { return background_action_; }

    bool is_valid_pair(int actor, int action) const {
        check_range(actor, action);
        return pair_to_joint_.count({actor, action}) > 0;
    }

    /// Dense joint index of a valid pair, or nullopt for an invalid one.
    std::optional<int> pair_index(int actor, int action) const {
        check_range(actor, action);
        auto it = pair_to_joint_.find({actor, action});
        if (it == pair_to_joint_.end()) return std::nullopt;
        return it->second;
    }

    std::pair<int, int> pair_decode(int joint) const {
        if (joint < 0 || joint >= num_pairs())
            throw std::out_of_range("Taxonomy: joint index out of range");
        return pairs_[static_cast<std::size_t>(joint)];
    }

    /// Display name of a joint class ("BG" for the background pair).
    std::string pair_name(int joint) const {
        const auto [a, c] = pair_decode(joint);
        if (a == background_actor_ && c == background_action_) return "BG";
        return actor_names_[static_cast<std::size_t>(a)] + "-" +
               action_names_[static_cast<std::size_t>(c)];
    }

    /// The A2D class layout: 7 actors plus background, 9 actions with "none"
    /// doubling as the action background, and the 43 valid joint classes.
    static Taxonomy a2d() {
        const std::vector<std::string> actors = {"background", "adult", "baby", "ball",
                                                 "bird",       "car",   "cat",  "dog"};
        const std::vector<std::string> actions = {"none",    "climbing", "crawling",
                                                  "eating",  "flying",   "jumping",
                                                  "rolling", "running",  "walking"};
        auto act = [&](const std::string& name) {
            for (std::size_t i = 0; i < actions.size(); ++i)
                if (actions[i] == name) return static_cast<int>(i);
            throw std::logic_error("unknown action " + name);
        };
        std::vector<std::pair<int, int>> pairs = {{0, 0}};
        const std::vector<std::pair<int, std::vector<std::string>>> table = {
            {1, {"climbing", "crawling", "eating", "jumping", "rolling", "running", "walking",
                 "none"}},
            {2, {"climbing", "crawling", "rolling", "walking", "none"}},
            {3, {"flying", "jumping", "rolling", "none"}},
            {4, {"climbing", "eating", "flying", "jumping", "rolling", "walking", "none"}},
            {5, {"flying", "jumping", "rolling", "running", "none"}},
            {6, {"climbing", "eating", "jumping", "rolling", "running", "walking", "none"}},
            {7, {"crawling", "eating", "jumping", "rolling", "running", "walking"}},
        };
        for (const auto& [actor, names] : table)
            for (const auto& name : names) pairs.emplace_back(actor, act(name));
        return Taxonomy(actors, actions, std::move(pairs), 0, 0);
    }

    bool operator==(const Taxonomy& other) const {
        return actor_names_ == other.actor_names_ && action_names_ == other.action_names_ &&
               pairs_ == other.pairs_ && background_actor_ == other.background_actor_ &&
               background_action_ == other.background_action_;
    }

  private:
    void check_range(int actor, int action) const {
        if (actor < 0 || actor >= num_actors())
            throw std::out_of_range("Taxonomy: actor index out of range");
        if (action < 0 || action >= num_actions())
            throw std::out_of_range("Taxonomy: action index out of range");
    }

    std::vector<std::string> actor_names_;
    std::vector<std::string> action_names_;
    std::vector<std::pair<int, int>> pairs_;
    std::map<std::pair<int, int>, int> pair_to_joint_;
    int background_actor_ = 0;
    int background_action_ = 0;
};

} // namespace aaseg
