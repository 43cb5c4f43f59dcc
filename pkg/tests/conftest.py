def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-seed end-to-end reproduction (minutes)")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
