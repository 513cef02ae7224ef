#include "ctikg/exporters.hpp"

#include <sstream>

namespace ctikg {

namespace {

std::string dot_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '"' || c == '\\')
            out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

} // namespace

std::string to_dot(const KnowledgeGraph& g) {
    std::ostringstream out;
    out << "digraph cti {\n";
    out << "  rankdir=LR;\n";
    out << "  node [shape=box];\n";
    for (const auto& [id, node] : g.nodes()) {
        out << "  \"" << dot_escape(id) << "\" [label=\"" << dot_escape(node.canonical)
            << "\\n(" << dot_escape(node.entity_type) << ")\"];\n";
    }
    for (const auto& e : g.edges()) {
        out << "  \"" << dot_escape(e.source) << "\" -> \"" << dot_escape(e.target)
            << "\" [label=\"" << dot_escape(e.relation) << "\", provenance="
            << provenance_name(e.provenance);
        if (e.provenance == Provenance::inferred)
            out << ", style=dashed";
        out << "];\n";
    }
    out << "}\n";
    return out.str();
}

std::string to_graphml(const KnowledgeGraph& g) {
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n";
    out << "  <key id=\"canonical\" for=\"node\" attr.name=\"canonical\" attr.type=\"string\"/>\n";
    out << "  <key id=\"entity_type\" for=\"node\" attr.name=\"entity_type\" attr.type=\"string\"/>\n";
    out << "  <key id=\"ioc_class\" for=\"node\" attr.name=\"ioc_class\" attr.type=\"string\"/>\n";
    out << "  <key id=\"aliases\" for=\"node\" attr.name=\"aliases\" attr.type=\"string\"/>\n";
    out << "  <key id=\"relation\" for=\"edge\" attr.name=\"relation\" attr.type=\"string\"/>\n";
    out << "  <key id=\"provenance\" for=\"edge\" attr.name=\"provenance\" attr.type=\"string\"/>\n";
    out << "  <graph id=\"cti\" edgedefault=\"directed\">\n";
    for (const auto& [id, node] : g.nodes()) {
        out << "    <node id=\"" << xml_escape(id) << "\">\n";
        out << "      <data key=\"canonical\">" << xml_escape(node.canonical) << "</data>\n";
        out << "      <data key=\"entity_type\">" << xml_escape(node.entity_type) << "</data>\n";
        if (node.ioc_class)
            out << "      <data key=\"ioc_class\">" << xml_escape(*node.ioc_class)
                << "</data>\n";
        std::string aliases;
        for (const auto& alias : node.aliases) {
            if (!aliases.empty())
                aliases += "; ";
            aliases += alias;
        }
        out << "      <data key=\"aliases\">" << xml_escape(aliases) << "</data>\n";
        out << "    </node>\n";
    }
    std::size_t edge_id = 0;
    for (const auto& e : g.edges()) {
        out << "    <edge id=\"e" << edge_id++ << "\" source=\"" << xml_escape(e.source)
            << "\" target=\"" << xml_escape(e.target) << "\">\n";
        out << "      <data key=\"relation\">" << xml_escape(e.relation) << "</data>\n";
        out << "      <data key=\"provenance\">" << provenance_name(e.provenance) << "</data>\n";
        out << "    </edge>\n";
    }
    out << "  </graph>\n";
    out << "</graphml>\n";
    return out.str();
}

} // namespace ctikg
