#include "dm-core.h"

enum dm_uevent_type {
	DM_UEVENT_PATH_FAILED,
	DM_UEVENT_PATH_REINSTATED,
};

struct dm_uevent {
	struct mapped_device *md;
	enum dm_uevent_type action;
	char name[16];
	char uuid[129];
};

void dm_send_uevents(struct mapped_device *md)
{
	md->event_nr++;
}
