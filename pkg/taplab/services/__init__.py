from taplab.services.tasks import TASKS, BaseTask, TaskResult, get_task

__all__ = ["TASKS", "BaseTask", "TaskResult", "get_task"]
