from django.contrib import admin
from django.utils.html import format_html
from .models import VerificationRun


@admin.register(VerificationRun)
class VerificationRunAdmin(admin.ModelAdmin):
    list_display = ['command', 'input_name', 'order', 'status_badge', 'failed_checks', 'digest_short', 'created_at']
    list_filter = ['command', 'passed', 'exit_code', 'created_at']
    search_fields = ['input_name', 'input_digest']
    readonly_fields = ['command', 'input_name', 'input_digest', 'order', 'exit_code', 'passed',
                       'failed_checks', 'report', 'created_at']
    list_per_page = 50

    def status_badge(self, obj):
        colors = {0: 'green', 1: 'red', 2: 'orange'}
        labels = {0: 'Passed', 1: 'Failed', 2: 'Invalid input'}
        return format_html(
            '<span style="background-color: {}; color: white; padding: 2px 8px; border-radius: 12px; font-size: 12px;">{}</span>',
            colors.get(obj.exit_code, 'gray'), labels.get(obj.exit_code, obj.exit_code)
        )
    status_badge.short_description = 'Status'

    def digest_short(self, obj):
        return obj.input_digest[:12] + "..." if obj.input_digest else "-"
    digest_short.short_description = 'Input digest'

    def has_add_permission(self, request):
        return False
