from django.contrib import admin

from .models import FitRun


@admin.register(FitRun)
class FitRunAdmin(admin.ModelAdmin):
    """Admin view of archived fit runs.

    Runs are read-only records of a finished ``fit``: every field is shown but
    none can be edited, and runs are only added through ``fit --record``.

    Attributes:
        list_display (tuple[str]): Dimensions, scheme and final log joint at a glance.
        list_filter (tuple[str]): Filter by scheme and library version.
        search_fields (tuple[str]): Search by seed or version.
        fieldsets: Run summary first, the full JSON report last.
    """
    list_display = ('id', 'scheme', 'n_parents', 'n_categories', 'n_groups', 'sweeps', 'seed',
                    'final_log_joint', 'created_at')
    list_filter = ('scheme', 'version')
    ordering = ('-created_at',)
    search_fields = ('seed', 'version')
    fieldsets = (
        (None, {'fields': ('scheme', 'seed', 'sweeps', 'version')}),
        ('Dimensions', {'fields': ('n_parents', 'n_categories', 'n_groups')}),
        ('Result', {'fields': ('final_log_joint', 'report')}),
        ('Dates', {'fields': ('created_at',)}),
    )
    readonly_fields = ('scheme', 'seed', 'sweeps', 'version', 'n_parents', 'n_categories', 'n_groups',
                       'final_log_joint', 'report', 'created_at')

    def has_add_permission(self, request) -> bool:
        return False
