#pragma once

#include <map>
#include <string>
#include <vector>

#include "brainalign/types.hpp"

namespace brainalign {

enum class PromptTask { Captioning, Rec, SpottingCaptioning, Qa, QaCot, QaCotBox };

PromptTask parse_task(const std::string& name);
std::string task_name(PromptTask task);

struct PromptTemplate {
    PromptTask task = PromptTask::Captioning;
    std::string text;  // with <image> / <expr> / <question> placeholders

    /// Placeholders the task requires to be present in the template.
    std::vector<std::string> required_placeholders() const;
    bool valid() const;
};

/// Template store; one "task<TAB>template" line per entry in the text format.
class TemplateRegistry {
  public:
    void add(const PromptTemplate& tmpl);
    const std::vector<PromptTemplate>& for_task(PromptTask task) const;

    static TemplateRegistry load(const std::string& path);
    void save(const std::string& path) const;

    /// Registry shipped with the repo (three templates per task).
    static TemplateRegistry builtin();

  private:
    std::map<PromptTask, std::vector<PromptTemplate>> by_task_;
};

/// Substitutes every placeholder and prepends the chat layout
/// ("system message. user: ... assistant:"). <image> binds to a feature-export
/// reference, never pixel data. Unbound placeholders are an error.
std::string render_prompt(const PromptTemplate& tmpl,
                          const std::map<std::string, std::string>& fields);

struct GroundedSpan {
    std::string span;  // noun-phrase text preceding the box
    LabeledBox box;    // label carries the span text
};

/// Extracts "[x1,y1,x2,y2]" tuples with their preceding text spans.
/// Malformed tuples are skipped; out-of-range coordinates are clamped to [0,1].
std::vector<GroundedSpan> parse_grounded_response(const std::string& text);

}  // namespace brainalign
