import time


def pytest_sessionstart(session):
    session.config._suite_started = time.perf_counter()


def pytest_collection_modifyitems(session, config, items):
    # the wall-time budget test must observe every other test, so run it last
    tail = [it for it in items if "wall_time" in it.name]
    items[:] = [it for it in items if "wall_time" not in it.name] + tail
