#include "brainalign/bridge.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace brainalign {

PromptTask parse_task(const std::string& name) {
    if (name == "captioning") return PromptTask::Captioning;
    if (name == "rec") return PromptTask::Rec;
    if (name == "spotting_captioning") return PromptTask::SpottingCaptioning;
    if (name == "qa") return PromptTask::Qa;
    if (name == "qa_cot") return PromptTask::QaCot;
    if (name == "qa_cot_box") return PromptTask::QaCotBox;
    throw std::invalid_argument("unknown prompt task: " + name);
}

std::string task_name(PromptTask task) {
    switch (task) {
        case PromptTask::Captioning: return "captioning";
        case PromptTask::Rec: return "rec";
        case PromptTask::SpottingCaptioning: return "spotting_captioning";
        case PromptTask::Qa: return "qa";
        case PromptTask::QaCot: return "qa_cot";
        case PromptTask::QaCotBox: return "qa_cot_box";
    }
    return "?";
}

std::vector<std::string> PromptTemplate::required_placeholders() const {
    switch (task) {
        case PromptTask::Captioning:
        case PromptTask::SpottingCaptioning: return {"<image>"};
        case PromptTask::Rec: return {"<image>", "<expr>"};
        case PromptTask::Qa:
        case PromptTask::QaCot:
        case PromptTask::QaCotBox: return {"<image>", "<question>"};
    }
    return {};
}

bool PromptTemplate::valid() const {
    for (const auto& ph : required_placeholders()) {
        if (text.find(ph) == std::string::npos) return false;
    }
    return true;
}

void TemplateRegistry::add(const PromptTemplate& tmpl) {
    if (!tmpl.valid()) {
        throw std::invalid_argument("template for " + task_name(tmpl.task) +
                                    " is missing a required placeholder: " + tmpl.text);
    }
    by_task_[tmpl.task].push_back(tmpl);
}

const std::vector<PromptTemplate>& TemplateRegistry::for_task(PromptTask task) const {
    static const std::vector<PromptTemplate> empty;
    auto it = by_task_.find(task);
    return it == by_task_.end() ? empty : it->second;
}

TemplateRegistry TemplateRegistry::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing template file: " + path);
    TemplateRegistry reg;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error("malformed template line: " + line);
        }
        reg.add({parse_task(line.substr(0, tab)), line.substr(tab + 1)});
    }
    return reg;
}

void TemplateRegistry::save(const std::string& path) const {
    std::ofstream out(path);
    for (const auto& [task, templates] : by_task_) {
        for (const auto& t : templates) out << task_name(task) << '\t' << t.text << '\n';
    }
}

TemplateRegistry TemplateRegistry::builtin() {
    TemplateRegistry reg;
    using T = PromptTask;
    reg.add({T::Captioning, "Describe this image <image> as simply as possible."});
    reg.add({T::Captioning,
             "What is the content of the image <image>? Please answer in short sentences."});
    reg.add({T::Captioning, "Summarize the content of the photo <image>."});
    reg.add({T::Rec, "In the given <image>, could you find and tell me the coordinates of "
                     "<expr>?"});
    reg.add({T::Rec, "I need the coordinates of <expr> in <image>, can you please assist me "
                     "with that?"});
    reg.add({T::Rec, "Locate <expr> in <image> and provide its coordinates, please."});
    reg.add({T::SpottingCaptioning,
             "Can you provide a description of the image <image> and include the coordinates "
             "[x0,y0,x1,y1] for each mentioned object?"});
    reg.add({T::SpottingCaptioning,
             "Please explain what's happening in the photo <image> and give coordinates "
             "[xmin,ymin,xmax,ymax] for the items you reference."});
    reg.add({T::SpottingCaptioning,
             "How would you describe the contents of the image <image>? Please provide the "
             "positions of mentioned objects in square brackets."});
    reg.add({T::Qa, "I want to know the answer to '<question>' Refer to the image <image> and "
                    "give a clear response."});
    reg.add({T::Qa, "Answer this question directly after referring to the image <image>: "
                    "<question>"});
    reg.add({T::Qa, "Examine the image <image> and provide a brief answer for '<question>'"});
    reg.add({T::QaCot,
             "Having a look at image <image>, can you tell me the answer to my question "
             "'<question>' and the logic leading to it?"});
    reg.add({T::QaCot, "Please answer the following question '<question>' based on the image "
                       "<image>, and describe your thought process"});
    reg.add({T::QaCot,
             "Upon analyzing the image <image>, please find the answer to my question "
             "'<question>' and provide a detailed explanation."});
    reg.add({T::QaCotBox,
             "<question> Please offer your reasoning process, and provide bounding boxes of "
             "mentioned objects within square brackets. Here is the picture <image>"});
    reg.add({T::QaCotBox,
             "Please explain your reasoning and provide bounding boxes, denoted by square "
             "brackets, for the objects mentioned in the picture <image>. <question>"});
    reg.add({T::QaCotBox,
             "Consider <image>, and then provide a well-reasoned answer to '<question>' Don't "
             "forget to mark relevant object locations using [x0,y0,x1,y1]."});
    return reg;
}

std::string render_prompt(const PromptTemplate& tmpl,
                          const std::map<std::string, std::string>& fields) {
    std::string instruction = tmpl.text;
    for (const auto& ph : tmpl.required_placeholders()) {
        const std::string key = ph.substr(1, ph.size() - 2);  // strip the angle brackets
        auto it = fields.find(key);
        if (it == fields.end()) {
            throw std::invalid_argument("render_prompt: unbound placeholder " + ph);
        }
        std::size_t pos = 0;
        while ((pos = instruction.find(ph, pos)) != std::string::npos) {
            instruction.replace(pos, ph.size(), it->second);
            pos += it->second.size();
        }
    }
    return "system message.\nuser: " + instruction + "\nassistant:";
}

std::vector<GroundedSpan> parse_grounded_response(const std::string& text) {
    std::vector<GroundedSpan> out;
    std::size_t cursor = 0;  // start of the current span text
    std::size_t pos = 0;
    while ((pos = text.find('[', pos)) != std::string::npos) {
        const auto close = text.find(']', pos);
        if (close == std::string::npos) break;
        std::string inner = text.substr(pos + 1, close - pos - 1);
        std::replace(inner.begin(), inner.end(), ',', ' ');
        std::istringstream is(inner);
        double v[4];
        std::string trailing;
        if (is >> v[0] >> v[1] >> v[2] >> v[3] && !(is >> trailing)) {
            GroundedSpan span;
            std::string s = text.substr(cursor, pos - cursor);
            // trim whitespace and leading punctuation
            const auto b = s.find_first_not_of(" \t\n,.;:");
            const auto e = s.find_last_not_of(" \t\n");
            span.span = b == std::string::npos ? "" : s.substr(b, e - b + 1);
            for (auto& c : v) c = std::clamp(c, 0.0, 1.0);
            span.box = {span.span, v[0], v[1], v[2], v[3]};
            out.push_back(std::move(span));
            cursor = close + 1;
        }
        // malformed tuples are skipped without advancing the span start
        pos = close + 1;
    }
    return out;
}

}  // namespace brainalign
