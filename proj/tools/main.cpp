#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "pchain/inspect.hpp"
#include "pchain/scenario.hpp"

namespace {

int cmd_run(const std::string& script, std::optional<uint64_t> seed, const std::string& out_dir,
            bool trace) {
    try {
        pchain::ScenarioRunner runner(out_dir, trace);
        pchain::Transcript t = runner.run_file(script, seed);
        std::cout << t.to_json().dump() << '\n';
        if (!t.passed()) {
            std::cerr << "assertion failed: " << t.first_failure << '\n';
            return 1;
        }
        return 0;
    } catch (const pchain::ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << '\n';
        return 2;
    }
}

std::optional<pchain::LoadedChain> load_chain_or_report(const std::string& file) {
    std::ifstream in(file);
    if (!in) {
        std::cerr << "cannot open chain file: " << file << '\n';
        return std::nullopt;
    }
    auto result = pchain::load_and_verify(in);
    if (auto* vr = std::get_if<pchain::VerifyResult>(&result)) {
        std::cout << pchain::json{{"height", vr->height}, {"ok", false}, {"reason", vr->reason}}
                         .dump()
                  << '\n';
        std::cerr << "chain verification failed at height " << vr->height << ": " << vr->reason
                  << '\n';
        return std::nullopt;
    }
    return std::get<pchain::LoadedChain>(std::move(result));
}

int cmd_verify(const std::string& file) {
    auto loaded = load_chain_or_report(file);
    if (!loaded) return 1;
    std::cout << pchain::json{{"height", loaded->blocks.back().height}, {"ok", true}}.dump()
              << '\n';
    return 0;
}

int cmd_inspect(const std::string& file, std::optional<uint64_t> block,
                const std::string& account, const std::string& topic) {
    auto loaded = load_chain_or_report(file);
    if (!loaded) return 1;
    if (block) {
        std::cout << pchain::inspect_block(*loaded, *block).dump() << '\n';
        return 0;
    }
    if (!account.empty()) {
        auto addr = pchain::Address::from_hex(account);
        if (!addr) {
            std::cerr << "invalid account address: " << account << '\n';
            return 2;
        }
        std::cout << pchain::inspect_account(*loaded, *addr).dump() << '\n';
        return 0;
    }
    std::cout << pchain::inspect_topic(*loaded, topic).dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patternchain: deterministic mini-blockchain simulator with health data sharing pattern contracts"};
    app.require_subcommand(1);

    std::string script;
    std::string out_dir = "out";
    std::optional<uint64_t> seed;
    bool trace = false;
    auto* run = app.add_subcommand("run", "Run a scenario script");
    run->add_option("script", script, "Scenario JSON file")->required();
    run->add_option("--seed", seed, "Override the script's seed");
    run->add_option("--out", out_dir, "Output directory");
    run->add_flag("--trace", trace, "Write trace.jsonl with one record per VM step");

    std::string chain_file;
    auto* verify = app.add_subcommand("verify", "Verify a persisted chain file");
    verify->add_option("chain", chain_file, "chain.jsonl file")->required();

    std::string inspect_file;
    std::optional<uint64_t> block;
    std::string account;
    std::string topic;
    auto* inspect = app.add_subcommand("inspect", "Inspect a verified chain file");
    inspect->add_option("chain", inspect_file, "chain.jsonl file")->required();
    auto* opt_block = inspect->add_option("--block", block, "Block height");
    auto* opt_account = inspect->add_option("--account", account, "Account address (hex)");
    auto* opt_topic = inspect->add_option("--topic", topic, "Pub-sub topic");
    opt_block->excludes(opt_account)->excludes(opt_topic);
    opt_account->excludes(opt_topic);

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(script, seed, out_dir, trace);
    if (verify->parsed()) return cmd_verify(chain_file);
    if (inspect->parsed()) {
        if (!block && account.empty() && topic.empty()) {
            std::cerr << "inspect needs one of --block, --account, --topic\n";
            return 2;
        }
        return cmd_inspect(inspect_file, block, account, topic);
    }
    return 2;
}
