import subprocess
import sys
import json
import os
import threading
import time
import tempfile
import logging
from concurrent.futures import ThreadPoolExecutor

NOISE = ('Warning:', 'SyntaxWarning:', 'DeprecationWarning:', 'FutureWarning:', '--- Worker Started at')


class WorkerPool:
    def __init__(self, config_manager, base_dir):
        self.config_manager = config_manager
        self.base_dir = base_dir
        self.workers = {} # {slot: process}
        self.worker_stderr_files = {} # {slot: (file_handle, file_path)}
        self.worker_stats = {} # {slot: {'last_used': time.time(), 'active_requests': 0}}
        self.lock = threading.Lock()
        self.slot_locks = {}
        self.request_id_counter = 1
        self._shutdown_event = threading.Event()
        self._cleanup_thread = threading.Thread(target=self._cleanup_workers, daemon=True)
        self._cleanup_thread.start()

    def slot_names(self):
        count = max(1, int(self.config_manager.get_global_setting("workers", 1) or 1))
        return [f"slot{i}" for i in range(count)]

    def _close_stderr(self, slot):
        if slot not in self.worker_stderr_files:
            return
        old_file, old_path = self.worker_stderr_files.pop(slot)
        try:
            old_file.close()
        except Exception:
            pass
        # Only delete if it's a temporary file (not a user log)
        if old_path.startswith(tempfile.gettempdir()):
            try:
                os.remove(old_path)
            except OSError:
                pass

    def get_worker(self, slot):
        """
        Ensures a worker for the given slot is running and returns it.
        """
        with self.lock:
            proc = self.workers.get(slot)
            if proc is None or proc.poll() is not None:
                self._close_stderr(slot)

                enable_logging = self.config_manager.get_global_setting("enable_worker_logging", False)
                if enable_logging:
                    log_dir = os.path.join(os.path.dirname(self.base_dir), "logs")
                    os.makedirs(log_dir, exist_ok=True)
                    log_file_path = os.path.join(log_dir, f"worker_{slot}_stderr.log")
                    log_file = open(log_file_path, "a", encoding="utf-8", buffering=1)
                    log_file.write(f"\n--- Worker Started at {time.strftime('%Y-%m-%d %H:%M:%S')} ---\n")
                else:
                    # Temporary file for stderr capture (for error extraction)
                    log_file = tempfile.NamedTemporaryFile(
                        mode="w",
                        encoding="utf-8",
                        buffering=1,
                        delete=False,
                        prefix=f"worker_{slot}_",
                        suffix=".log"
                    )
                    log_file_path = log_file.name
                self.worker_stderr_files[slot] = (log_file, log_file_path)

                package_root = os.path.dirname(os.path.abspath(self.base_dir))
                cmd = [sys.executable, "-m", "src.worker"]
                try:
                    proc = subprocess.Popen(
                        cmd,
                        cwd=package_root,
                        stdin=subprocess.PIPE,
                        stdout=subprocess.PIPE,
                        stderr=log_file,
                        text=True,
                        bufsize=1,
                        encoding='utf-8'
                    )
                except OSError as e:
                    logging.error(f"get_worker returning error 'Unable to start worker: {e}'")
                    raise RuntimeError(f"Unable to start worker: {e}")
                self.workers[slot] = proc
                self.worker_stats[slot] = {'last_used': time.time(), 'active_requests': 0}
                self.slot_locks.setdefault(slot, threading.Lock())

            self.worker_stats[slot]['active_requests'] += 1
            self.worker_stats[slot]['last_used'] = time.time()
            logging.debug(f"get_worker returning result '{slot}'")
            return proc

    def _extract_stderr_error(self, slot):
        """
        Most relevant error message in the worker's stderr file, or None.
        """
        if slot not in self.worker_stderr_files:
            return None
        _, stderr_path = self.worker_stderr_files[slot]
        try:
            with open(stderr_path, 'r', encoding='utf-8', errors='replace') as f:
                last_lines = f.readlines()[-50:]
        except OSError:
            return None

        for line in reversed(last_lines):
            line = line.strip()
            if not line or any(keyword in line for keyword in NOISE):
                continue
            try:
                data = json.loads(line)
                if isinstance(data, dict) and 'error' in data:
                    return data['error']
            except json.JSONDecodeError:
                continue
        for line in reversed(last_lines):
            line = line.strip()
            if line and not any(keyword in line for keyword in NOISE):
                return line
        return None

    def send_rpc(self, slot, method, params=None):
        if params is None:
            params = {}

        proc = self.get_worker(slot)
        with self.lock:
            req_id = self.request_id_counter
            self.request_id_counter += 1
            slot_lock = self.slot_locks[slot]

        request = {
            "jsonrpc": "2.0",
            "method": method,
            "params": params,
            "id": req_id
        }

        try:
            with slot_lock:
                proc.stdin.write(json.dumps(request) + "\n")
                proc.stdin.flush()

                while True:
                    response_line = proc.stdout.readline()
                    if not response_line:
                        stderr_error = self._extract_stderr_error(slot)
                        with self.lock:
                            self.workers.pop(slot, None)
                        if stderr_error:
                            logging.error(f"Worker process terminated unexpectedly: {stderr_error}")
                            raise RuntimeError(f"Worker process terminated unexpectedly: {stderr_error}")
                        logging.error("Worker process terminated unexpectedly")
                        raise RuntimeError("Worker process terminated unexpectedly")

                    stripped = response_line.strip()
                    if not stripped:
                        continue
                    try:
                        response = json.loads(stripped)
                        if "jsonrpc" in response:
                            break
                        logging.debug(f"Worker emitted non-RPC JSON: {stripped}")
                    except json.JSONDecodeError:
                        logging.debug(f"Worker emitted non-RPC JSON: {stripped}")

            if "error" in response:
                logging.error(f"Worker Error: {response['error'].get('message', 'Unknown error')}")
                raise RuntimeError(f"Worker Error: {response['error'].get('message', 'Unknown error')}")
            return response.get("result")

        except BrokenPipeError:
            with self.lock:
                self.workers.pop(slot, None)
                self.worker_stats.pop(slot, None)
            logging.error(f"Communication with worker '{slot}' failed.")
            raise RuntimeError(f"Communication with worker '{slot}' failed.")
        finally:
            with self.lock:
                if slot in self.worker_stats:
                    self.worker_stats[slot]['active_requests'] -= 1
                    self.worker_stats[slot]['last_used'] = time.time()

    def map_checks(self, check_ids, config):
        """Runs each check on a worker slot; results come back in input order."""
        slots = self.slot_names()
        logging.info(f"map_checks called for {len(check_ids)} checks on {len(slots)} slots")

        def run(index_and_id):
            index, check_id = index_and_id
            slot = slots[index % len(slots)]
            return self.send_rpc(slot, "run_check", {"check_id": check_id, "config": config})

        with ThreadPoolExecutor(max_workers=len(slots)) as executor:
            results = list(executor.map(run, enumerate(check_ids)))
        logging.debug(f"map_checks returning {len(results)} results")
        return results

    def _cleanup_workers(self):
        """Background thread that monitors and shuts down idle workers."""
        while not self._shutdown_event.wait(5.0): # Run check every 5 seconds
            timeout = self.config_manager.get_global_setting("worker_timeout")
            # Default: never expire if timeout is missing, 0, or null
            if not timeout or timeout <= 0:
                continue
            with self.lock:
                for slot in list(self.workers.keys()):
                    stats = self.worker_stats.get(slot)
                    if not stats or stats['active_requests'] > 0:
                        continue
                    time_idle = time.time() - stats['last_used']
                    if time_idle > timeout:
                        logging.debug(f"Worker '{slot}' has been idle for {time_idle:.1f}s (timeout: {timeout}s), shutting it down.")
                        proc = self.workers.pop(slot)
                        if proc.poll() is None:
                            proc.terminate()
                        del self.worker_stats[slot]

    def shutdown(self):
        """Terminates all worker processes and cleans up stderr files."""
        self._shutdown_event.set()
        with self.lock:
            for proc in self.workers.values():
                if proc.poll() is None:
                    proc.terminate()

            for _ in range(10):
                if all(p.poll() is not None for p in self.workers.values()):
                    break
                time.sleep(0.1)

            for proc in self.workers.values():
                if proc.poll() is None:
                    proc.kill()

            for slot in list(self.worker_stderr_files):
                self._close_stderr(slot)

            self.workers.clear()
            self.worker_stats.clear()
