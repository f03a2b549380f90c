"""
Process-level settings read from the environment (optionally a .env file).
"""

import os

from dotenv import load_dotenv

load_dotenv()


class Settings:
    """Defaults shared by the CLI, the task workers and the evaluators."""

    def __init__(self):
        self.precision_bits = int(os.getenv('VERIFIER_PRECISION_BITS', '200'))
        self.term_cap = int(os.getenv('VERIFIER_TERM_CAP', '10000000'))
        self.node_cap = int(os.getenv('VERIFIER_NODE_CAP', '1000000'))
        self.broker_url = os.getenv('VERIFIER_BROKER_URL')
        self.result_backend = os.getenv('VERIFIER_RESULT_BACKEND', self.broker_url)
        self.log_level = os.getenv('LOG_LEVEL', 'INFO').upper()

    @property
    def eager(self) -> bool:
        """Run tasks in-process when no broker is configured."""
        return not self.broker_url


settings = Settings()
