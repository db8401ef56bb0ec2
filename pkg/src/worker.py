import sys
import json
import math
import traceback

import numpy as np

try:
    from .logic import verification
except ImportError:
    verification = None


class JsonSafeEncoder(json.JSONEncoder):
    """
    Custom JSON encoder that handles numpy scalars and arrays, complex numbers and sets.
    Non-finite floats become null at any depth, so the output is strict JSON.
    """
    def __init__(self, *args, **kwargs):
        kwargs["allow_nan"] = False
        super().__init__(*args, **kwargs)

    def iterencode(self, o, _one_shot=False):
        # float subclasses such as np.float64 never reach default()
        return super().iterencode(self.sanitize(o), _one_shot)

    def sanitize(self, obj):
        if isinstance(obj, dict):
            return {k if isinstance(k, (str, int, bool)) or k is None else str(k): self.sanitize(v)
                    for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [self.sanitize(v) for v in obj]
        if isinstance(obj, (set, frozenset)):
            items = [self.sanitize(v) for v in obj]
            try:
                return sorted(items)
            except TypeError:
                return items
        if isinstance(obj, (bool, np.bool_)):
            return bool(obj)
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, (float, np.floating)):
            value = float(obj)
            return value if math.isfinite(value) else None
        if isinstance(obj, (complex, np.complexfloating)):
            return {"re": self.sanitize(float(obj.real)), "im": self.sanitize(float(obj.imag))}
        if isinstance(obj, np.ndarray):
            return self.sanitize(obj.tolist())
        if hasattr(obj, 'to_dict'):
            return self.sanitize(obj.to_dict())
        return obj

    def default(self, obj):
        try:
            return super().default(obj)
        except Exception:
            return str(obj)


def handle(method, params):
    if method == "ping":
        return {"status": "ok"}
    if method == "list_checks":
        return verification.list_checks()
    if method == "run_check":
        check_id = params.get("check_id")
        if not check_id:
            raise ValueError("check_id is required")
        config = params.get("config") or {}
        report = verification.run_check(check_id, config.get("settings"), config.get("seed", 0))
        return report.to_dict()
    raise LookupError(f"Method '{method}' not found")


def main():
    # 1. Check the workbench imports
    if verification is None:
        print(json.dumps({"error": "Failed to import the workbench package. Run this as 'python -m src.worker'."}),
              file=sys.stderr)
        sys.exit(1)

    # Signal readiness
    print(json.dumps({"status": "ready", "checks": len(verification.CHECKS)}), file=sys.stderr)
    sys.stderr.flush()

    # 2. Main Loop
    while True:
        try:
            line = sys.stdin.readline()
            if not line:
                break

            request = json.loads(line)
            method = request.get("method")
            params = request.get("params", {})
            req_id = request.get("id")

            result = None
            error = None
            try:
                result = handle(method, params)
            except Exception as e:
                error = str(e)
                print(f"Internal Error processing {method}: {traceback.format_exc()}", file=sys.stderr)

            # Send Response
            response = {
                "jsonrpc": "2.0",
                "id": req_id
            }
            if error:
                response["error"] = {"code": -32603, "message": error}
            else:
                response["result"] = result

            try:
                print(json.dumps(response, cls=JsonSafeEncoder))
                sys.stdout.flush()
            except Exception as ser_err:
                print(f"Serialization Error: {ser_err}", file=sys.stderr)
                safe_err = {
                    "jsonrpc": "2.0",
                    "id": req_id,
                    "error": {"code": -32603, "message": f"Data serialization failed: {ser_err}"}
                }
                print(json.dumps(safe_err))
                sys.stdout.flush()

        except json.JSONDecodeError:
            print("JSON Decode Error", file=sys.stderr)
        except Exception as e:
            print(f"Fatal Loop Error: {e}", file=sys.stderr)
            break

if __name__ == "__main__":
    main()
