from mcp.server.fastmcp import FastMCP
import os
import atexit
import json
import inspect
from functools import wraps

try:
    from .config_manager import ConfigManager
    from .worker_pool import WorkerPool
    from . import logic
    from .logging_setup import setup_logging
    from .worker import JsonSafeEncoder
except ImportError:
    from config_manager import ConfigManager
    from worker_pool import WorkerPool
    import logic
    from logging_setup import setup_logging
    from worker import JsonSafeEncoder

# Initialize Configuration
base_dir = os.path.dirname(os.path.abspath(__file__))
config_path = os.getenv("WORKBENCH_CONFIGPATH", os.path.join(base_dir, "..", "config.json"))

config_manager = ConfigManager(config_path)

setup_logging(config_manager, base_dir)

# Initialize FastMCP Server
mcp = FastMCP("Fedosov Wigner Workbench")

# Initialize Worker Pool
worker_pool = WorkerPool(config_manager, base_dir)
atexit.register(worker_pool.shutdown)

def json_tool_impl():
    """Decorator that ensures tool results are JSON-serialized strings."""
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            result = func(*args, **kwargs)
            return json.dumps(result, cls=JsonSafeEncoder)
        return wrapper
    return decorator

# --- Tool Factory ---

def create_tool_wrapper(impl_func, tool_name, description, needs_worker=False, needs_config=False):
    """
    Factory that creates a tool wrapper around an `_x_impl` function.

    Args:
        impl_func: The implementation function from logic
        tool_name: Name of the tool
        description: Docstring for the tool (shown to agents)
        needs_worker: Whether to pass worker_pool to impl_func
        needs_config: Whether to pass config_manager to impl_func
    """
    sig = inspect.signature(impl_func)
    # worker_pool and config_manager are injected, not advertised
    tool_params = [p for p in sig.parameters.values() if p.name not in ('worker_pool', 'config_manager')]
    new_sig = sig.replace(parameters=tool_params)

    def wrapper(*args, **kwargs):
        bound = new_sig.bind(*args, **kwargs)
        bound.apply_defaults()
        impl_kwargs = dict(bound.arguments)
        if needs_worker:
            impl_kwargs['worker_pool'] = worker_pool
        if needs_config:
            impl_kwargs['config_manager'] = config_manager
        return impl_func(**impl_kwargs)

    wrapper.__signature__ = new_sig
    wrapper.__name__ = tool_name
    wrapper.__doc__ = description

    wrapped = json_tool_impl()(wrapper)
    mcp.tool(name=tool_name)(wrapped)

    # Store the wrapper in the module's globals for testing/introspection
    globals()[tool_name] = wrapper


# --- Tool Definitions ---

TOOL_DEFINITIONS = [
    {
        "name": "connection_table",
        "impl": logic._connection_table_impl,
        "description": """Symplectic connection coefficients of a chart, transported from the flat Cartesian connection.
chart: "cartesian" or "action-angle" (variables T, chi, H, L).
Returns the nonzero entries under sorted 1-based index triples as exact rational expressions.""",
    },
    {
        "name": "derive_star_operator",
        "impl": logic._derive_star_operator_impl,
        "description": """Derive the differential operator g -> observable * g (side "left") or g -> g * observable (side "right") from the Fedosov construction.
observable: expression in the chart variables, e.g. "H" or "L" (see help topic expression_grammar).
hbar_order: highest power of hbar kept (default 2).""",
        "needs_config": True,
    },
    {
        "name": "star_product",
        "impl": logic._star_product_impl,
        "description": """Fedosov star product f * g of two observables as an exact series in hbar, e.g. f="x", g="px" gives "x*px + (i/2)*hbar".
chart: "cartesian" (x, y, px, py) or "action-angle" (T, chi, H, L).""",
        "needs_config": True,
    },
    {
        "name": "evaluate_wigner",
        "impl": logic._evaluate_wigner_impl,
        "description": """Evaluate the (cross-)Wigner eigenfunction W_Emm' at a point (chi, H, L).
m_prime defaults to m (the diagonal W_Em). Returns {"singular": reason} on the H = E boundary.""",
        "needs_config": True,
    },
    {
        "name": "marginal_curve",
        "impl": logic._marginal_curve_impl,
        "description": """Position marginal P(r) of W_Em on points radii in [0, r_max].
For integer m and half-integer m up to 7/2 the closed form error is reported. m = 1/2 stays positive; 1 < m < 2 gives negative values.""",
        "needs_config": True,
    },
    {
        "name": "expansion_coefficient",
        "impl": logic._expansion_coefficient_impl,
        "description": """Coefficient C of W_{E m~ m~'} in the expansion of the momentum eigenstate with direction chi0 and phase convention alpha.""",
    },
    {
        "name": "list_checks",
        "impl": logic._list_checks_impl,
        "description": """List the registered verification checks with their suites.""",
    },
    {
        "name": "run_verification",
        "impl": logic._run_verification_impl,
        "description": """Run verification checks and return their reports.
selection: "all", a suite name (charts, star, eigenfunctions, identities, expansion) or a check id.
seed: optional run seed; each check derives its own seed from it.""",
        "needs_worker": True,
        "needs_config": True,
    },
]

# Register all tools
for tool_def in TOOL_DEFINITIONS:
    create_tool_wrapper(
        impl_func=tool_def["impl"],
        tool_name=tool_def["name"],
        description=tool_def["description"],
        needs_worker=tool_def.get("needs_worker", False),
        needs_config=tool_def.get("needs_config", False),
    )


# --- Resources ---

skills_dir = os.path.join(base_dir, "skills")

@mcp.resource("workbench://help/list")
def get_help_topics() -> str:
    """List available help topics."""
    return logic._list_help_topics_impl(skills_dir)

@mcp.resource("workbench://help/{topic}")
def return_help_topic(topic: str) -> str:
    """Get help on a specific topic."""
    return logic._get_help_topic_impl(topic, skills_dir)

# --- Tool Fallbacks ---
# These are for compatibility with agents that haven't implemented MCP resources yet.

expose_via_tools = config_manager.get_global_setting("expose_resources_via_tools", False)

if expose_via_tools:
    @mcp.tool()
    @json_tool_impl()
    def list_help_topics() -> str:
        """
        List available help topics for using the workbench.
        """
        return logic._list_help_topics_impl(skills_dir)

    @mcp.tool()
    @json_tool_impl()
    def get_help_topic(topic: str) -> str:
        """
        Get detailed documentation on a specific topic.
        """
        return logic._get_help_topic_impl(topic, skills_dir)


def main():
    """Main entry point for the MCP server."""
    mcp.run()

if __name__ == "__main__":
    main()
