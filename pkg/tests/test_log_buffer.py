import logging

from adptrack import log_buffer


def test_run_log_holds_records_since_clear(tmp_path):
    log_buffer.install_log_handler()
    log = logging.getLogger("adptrack.sim")
    log.warning("before clear")
    log_buffer.clear()
    log.warning("stack full at t=%.2f", 0.5)
    log.error("diverged")
    path = tmp_path / "run.log"
    assert log_buffer.write_run_log(path) == 2
    lines = path.read_text().splitlines()
    assert "[adptrack.sim] WARNING stack full at t=0.50" in lines[0]
    assert lines[1].endswith("ERROR diverged")


def test_install_is_idempotent(tmp_path):
    log_buffer.install_log_handler()
    log_buffer.install_log_handler()
    log_buffer.clear()
    logging.getLogger("adptrack").warning("once")
    assert log_buffer.write_run_log(tmp_path / "run.log") == 1


def test_empty_run_log(tmp_path):
    log_buffer.install_log_handler()
    log_buffer.clear()
    path = tmp_path / "run.log"
    assert log_buffer.write_run_log(path) == 0
    assert path.read_text() == ""
