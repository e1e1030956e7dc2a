"""
URL configuration for Tightstack project.

Only the admin is served; it lists the recorded verification runs.
"""

from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
